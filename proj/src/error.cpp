#include "dyadloop/error.hpp"

namespace dyadloop {

namespace {

std::string with_line(const std::string& what, std::size_t line) {
    if (line == 0) {
        return what;
    }
    return "line " + std::to_string(line) + ": " + what;
}

} // namespace

ParseError::ParseError(const std::string& what, std::size_t line)
    : Error(with_line(what, line)), line_(line) {}

ParseError::ParseError(const std::filesystem::path& file, const std::string& what, std::size_t line)
    : Error(file.string() + (line == 0 ? "" : ":" + std::to_string(line)) + ": " + what), line_(line) {}

IoError::IoError(const std::string& what, std::filesystem::path path)
    : Error(what + ": " + path.string()), path_(std::move(path)) {}

HttpError::HttpError(int status, std::string body_excerpt)
    : Error("HTTP " + std::to_string(status) + ": " + body_excerpt),
      status_(status),
      body_(std::move(body_excerpt)) {}

} // namespace dyadloop
