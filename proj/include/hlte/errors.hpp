#pragma once

#include <stdexcept>
#include <string>

namespace hlte {

// Error taxonomy; the CLI maps these onto exit codes:
// config/usage -> 2, data/domain/io -> 3, training -> 4.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DomainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Training failure; carries the epoch where the loss went non-finite
// (epoch = -1 when the failure is not epoch-specific, e.g. an unfittable arm).
class TrainingError : public std::runtime_error {
 public:
  explicit TrainingError(const std::string& what, int epoch = -1)
      : std::runtime_error(what), epoch_(epoch) {}
  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

}  // namespace hlte
