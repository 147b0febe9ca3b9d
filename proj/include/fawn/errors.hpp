#ifndef FAWN_ERRORS_HPP
#define FAWN_ERRORS_HPP

#include <cstdint>
#include <stdexcept>
#include <string>

namespace fawn {

/// Tensor shapes that do not fit an operation.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Class index or grid cell outside its range.
class IndexError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// Violated precondition that is not about shapes or indices.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Loss or gradient became NaN/Inf during training.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed binary file. The message always carries the byte offset.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : std::runtime_error(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

/// Invalid configuration document. The message carries the key path.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& key, const std::string& what)
      : std::runtime_error("key '" + key + "': " + what), key_(key) {}

  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

}  // namespace fawn

#endif  // FAWN_ERRORS_HPP
