// SPDX-License-Identifier: Apache-2.0

#ifndef LINMARK_ERRORS_HPP
#define LINMARK_ERRORS_HPP

#include <cstddef>
#include <stdexcept>
#include <string>

namespace linmark {

/// Input data violates a precondition or schema (CLI exit code 2).
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

/// A command needs an artifact that an upstream command has not produced yet
/// (CLI exit code 3). The message names the producing command.
class MissingArtifactError : public std::runtime_error {
 public:
  explicit MissingArtifactError(const std::string& what) : std::runtime_error(what) {}
};

/// Bad verbalizer words, label definitions, or training configuration.
class ConfigError : public ValidationError {
 public:
  explicit ConfigError(const std::string& what) : ValidationError(what) {}
};

/// Malformed CHAT input; carries the 1-based line number of the offending tier.
class ChatParseError : public ValidationError {
 public:
  ChatParseError(std::size_t line, const std::string& what)
      : ValidationError("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// A document with no participant utterances at all.
class EmptySessionError : public ValidationError {
 public:
  explicit EmptySessionError(const std::string& what) : ValidationError(what) {}
};

/// Training diverged or was handed an impossible setup.
class TrainingError : public std::runtime_error {
 public:
  explicit TrainingError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace linmark

#endif  // LINMARK_ERRORS_HPP
