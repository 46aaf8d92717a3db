#pragma once

#include <stdexcept>
#include <string>

namespace wiperc {

// Every failure the library reports derives from Error so callers can catch
// one type at the top level and still branch on the specific kind.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class InputError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class GeometryError : public Error {
 public:
  using Error::Error;
};

class DegenerateReferenceError : public Error {
 public:
  DegenerateReferenceError(int subcarrier)
      : Error("degenerate reference antenna: zero magnitude at subcarrier " +
              std::to_string(subcarrier)),
        subcarrier_(subcarrier) {}
  int subcarrier() const { return subcarrier_; }

 private:
  int subcarrier_;
};

class OrderSelectionError : public Error {
 public:
  using Error::Error;
};

class UnderdeterminedError : public Error {
 public:
  using Error::Error;
};

class NoMotionError : public Error {
 public:
  using Error::Error;
};

class InfeasibleError : public Error {
 public:
  InfeasibleError(const std::string& what, int max_feasible)
      : Error(what), max_feasible_(max_feasible) {}
  int max_feasible() const { return max_feasible_; }

 private:
  int max_feasible_;
};

class DegenerateSampleError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Non-finite loss or activation during training.
class NumericError : public Error {
 public:
  NumericError(int epoch, int batch, std::string layer)
      : Error("non-finite value at epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch) +
              ", layer " + layer),
        epoch_(epoch),
        batch_(batch),
        layer_(std::move(layer)) {}
  int epoch() const { return epoch_; }
  int batch() const { return batch_; }
  const std::string& layer() const { return layer_; }

 private:
  int epoch_;
  int batch_;
  std::string layer_;
};

// Remote generation errors.
class TimeoutError : public Error {
 public:
  explicit TimeoutError(double elapsed_s)
      : Error("request timed out after " + std::to_string(elapsed_s) + " s"), elapsed_s_(elapsed_s) {}
  double elapsed_s() const { return elapsed_s_; }

 private:
  double elapsed_s_;
};

class ServiceError : public Error {
 public:
  ServiceError(int status, std::string excerpt)
      : Error("service returned status " + std::to_string(status) + ": " + excerpt),
        status_(status),
        excerpt_(std::move(excerpt)) {}
  int status() const { return status_; }
  const std::string& excerpt() const { return excerpt_; }

 private:
  int status_;
  std::string excerpt_;
};

class ProtocolError : public Error {
 public:
  using Error::Error;
};

// Raised by the pipeline; carries which stage failed and on which frame.
// `config_error` marks failures caused by bad configuration or missing files
// rather than by the data.
class StageError : public Error {
 public:
  StageError(std::string stage, int frame, const std::string& cause, bool config_error = false)
      : Error("stage '" + stage + "' failed at frame " + std::to_string(frame) + ": " + cause),
        stage_(std::move(stage)),
        frame_(frame),
        config_error_(config_error) {}
  const std::string& stage() const { return stage_; }
  int frame() const { return frame_; }
  bool config_error() const { return config_error_; }

 private:
  std::string stage_;
  int frame_;
  bool config_error_;
};

}  // namespace wiperc
