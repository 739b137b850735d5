// Test model for the subprocess protocol: returns every point unchanged.
//
//   echo_model [echo|nan|crash|crash_once <marker>|hang|garbage|wrong_id]
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <thread>

using json = nlohmann::json;

int main(int argc, char** argv) {
  const std::string mode = argc > 1 ? argv[1] : "echo";
  const std::string marker = argc > 2 ? argv[2] : "";
  std::string line;
  while (std::getline(std::cin, line)) {
    const json msg = json::parse(line, nullptr, false);
    if (msg.is_discarded()) return 1;
    if (msg.contains("hello")) {
      std::cout << json{{"ok", {{"output_dim", msg["hello"]["dimension"]}}}}.dump() << std::endl;
      continue;
    }
    if (msg.contains("bye")) return 0;
    if (!msg.contains("eval")) continue;

    if (mode == "crash") std::abort();
    if (mode == "crash_once" && !std::filesystem::exists(marker)) {
      std::ofstream(marker) << "crashed\n";
      std::abort();
    }
    if (mode == "hang") std::this_thread::sleep_for(std::chrono::hours(1));
    if (mode == "garbage") {
      std::cout << "this is not json" << std::endl;
      continue;
    }
    const json& points = msg["eval"]["points"];
    std::string values = "[";
    for (std::size_t k = 0; k < points.size(); ++k) {
      values += k ? ",[" : "[";
      for (std::size_t i = 0; i < points[k].size(); ++i) {
        char buf[64];
        if (mode == "nan" && k + 1 == points.size() && i == 0) {
          std::snprintf(buf, sizeof buf, "NaN");
        } else {
          std::snprintf(buf, sizeof buf, "%.17g", points[k][i].get<double>());
        }
        values += (i ? "," : "") + std::string(buf);
      }
      values += "]";
    }
    values += "]";
    const long id = msg["eval"]["id"].get<long>() + (mode == "wrong_id" ? 1 : 0);
    std::cout << "{\"result\":{\"id\":" << id << ",\"values\":" << values << "}}" << std::endl;
  }
  return 0;
}
