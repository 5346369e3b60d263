// Serves a table LM over the remote wire protocol. Used for local testing of
// the remote backend.
#include <iostream>
#include <memory>
#include <string>

#include <CLI11.hpp>

#include "cfd/error.hpp"
#include "cfd/remote.hpp"

int main(int argc, char** argv) {
  CLI::App app{"HTTP stub serving a table LM", "cfd_stub_server"};
  std::string spec, host = "127.0.0.1";
  int port = 0;
  app.add_option("--spec", spec, "table LM JSON file")->required();
  app.add_option("--host", host, "bind address")->capture_default_str();
  app.add_option("--port", port, "port (0 picks a free one)")->capture_default_str();
  CLI11_PARSE(app, argc, argv);

  try {
    auto lm = std::make_shared<const cfd::TableLm>(cfd::load_table_lm(spec));
    cfd::StubServer server(lm, host, port);
    // Printed on its own line so scripts can read the chosen port.
    std::cout << server.url() << std::endl;
    server.wait();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
