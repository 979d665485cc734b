#include "daf/io/fs.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <system_error>

#include "daf/common.hpp"

namespace daf::io {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ConfigError("cannot read file: " + path);
  }
  std::ostringstream buffer;
  buffer << in.rdbuf();
  if (in.bad()) {
    throw ConfigError("read failed: " + path);
  }
  return std::move(buffer).str();
}

void write_file_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw ConfigError("cannot write file: " + tmp);
    }
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) {
      throw ConfigError("write failed: " + tmp);
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    throw ConfigError("cannot move " + tmp + " to " + path + ": " +
                      ec.message());
  }
}

}  // namespace daf::io
