#include "drumremap/json_io.hpp"

#include <fstream>

#include "drumremap/errors.hpp"

namespace drumremap {

nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_json_file(const std::filesystem::path& path, const nlohmann::json& value) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << value.dump(2) << '\n';
  if (!out) throw DataError("failed writing " + path.string());
}

}  // namespace drumremap
