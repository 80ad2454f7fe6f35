#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

namespace dyadloop {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input file; `line()` is 1-based, 0 when not line-oriented.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line = 0);
    /// "file:line: what", or "file: what" when line is 0.
    ParseError(const std::filesystem::path& file, const std::string& what, std::size_t line);
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class IoError : public Error {
public:
    IoError(const std::string& what, std::filesystem::path path);
    const std::filesystem::path& path() const noexcept { return path_; }

private:
    std::filesystem::path path_;
};

/// A value or structure that breaks a documented invariant.
class ContractError : public Error {
public:
    using Error::Error;
};

class TimeoutError : public Error {
public:
    using Error::Error;
};

/// Connection-level failure (refused, reset, timed out before a response).
class TransportError : public Error {
public:
    using Error::Error;
};

/// Non-2xx HTTP response.
class HttpError : public Error {
public:
    HttpError(int status, std::string body_excerpt);
    int status() const noexcept { return status_; }
    const std::string& body_excerpt() const noexcept { return body_; }

private:
    int status_;
    std::string body_;
};

} // namespace dyadloop
