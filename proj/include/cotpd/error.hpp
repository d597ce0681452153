#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace cotpd {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input file; line is 1-based, 0 when unknown.
class ParseError : public Error {
 public:
  ParseError(std::string file, std::size_t line, const std::string& what)
      : Error(file + (line ? ":" + std::to_string(line) : std::string()) + ": " + what),
        file_(std::move(file)),
        line_(line) {}
  const std::string& file() const noexcept { return file_; }
  std::size_t line() const noexcept { return line_; }

 private:
  std::string file_;
  std::size_t line_;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class SpanRangeError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class LabelError : public Error {
 public:
  using Error::Error;
};

class MissingCaptionError : public Error {
 public:
  using Error::Error;
};

class LookupError : public Error {
 public:
  using Error::Error;
};

// Provider could not be reached after all retries.
class TransportError : public Error {
 public:
  TransportError(const std::string& what, std::size_t retries)
      : Error(what + " (after " + std::to_string(retries) + " retries)"), retries_(retries) {}
  std::size_t retries() const noexcept { return retries_; }

 private:
  std::size_t retries_;
};

class RateLimitError : public Error {
 public:
  RateLimitError(const std::string& what, std::size_t attempts)
      : Error(what), attempts_(attempts) {}
  std::size_t attempts() const noexcept { return attempts_; }

 private:
  std::size_t attempts_;
};

class ContextOverflowError : public Error {
 public:
  ContextOverflowError(std::size_t prompt_tokens, std::size_t max_context)
      : Error("prompt of " + std::to_string(prompt_tokens) + " tokens exceeds context of " +
              std::to_string(max_context)),
        prompt_tokens_(prompt_tokens),
        max_context_(max_context) {}
  std::size_t prompt_tokens() const noexcept { return prompt_tokens_; }
  std::size_t max_context() const noexcept { return max_context_; }

 private:
  std::size_t prompt_tokens_;
  std::size_t max_context_;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class TextTooLongError : public Error {
 public:
  using Error::Error;
};

class MissingKnowledgeError : public Error {
 public:
  explicit MissingKnowledgeError(std::vector<std::string> ids)
      : Error(describe(ids)), ids_(std::move(ids)) {}
  const std::vector<std::string>& sample_ids() const noexcept { return ids_; }

 private:
  static std::string describe(const std::vector<std::string>& ids) {
    std::string msg = "no knowledge record for " + std::to_string(ids.size()) +
                      " sample(s); run `synthesize` first. Missing:";
    for (std::size_t i = 0; i < ids.size() && i < 10; ++i) msg += " " + ids[i];
    if (ids.size() > 10) msg += " ...";
    return msg;
  }
  std::vector<std::string> ids_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace cotpd
