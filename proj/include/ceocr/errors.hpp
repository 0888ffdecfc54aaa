#pragma once

#include <stdexcept>
#include <string>

namespace ceocr {

// Base class for all library errors.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Invalid configuration: flags, config files, backend specs. CLI exit code 1.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Invalid input data: corpus records, samples, matrices. CLI exit code 2.
class DataError : public Error {
public:
    using Error::Error;
};

// Backend-level failures. CLI exit code 3.
class BackendError : public Error {
public:
    using Error::Error;
};

// Transport failure: retries exhausted, or a non-retryable HTTP status.
class TransportError : public BackendError {
public:
    using BackendError::BackendError;
};

// Fixture lookup miss; carries the (sample_id, model_name) key that failed.
class FixtureMissError : public BackendError {
public:
    FixtureMissError(std::string sample_id, std::string model_name, const std::string& path)
        : BackendError("fixture miss: " + sample_id + "/" + model_name + " (no file at " + path + ")"),
          sample_id_(std::move(sample_id)),
          model_name_(std::move(model_name)) {}

    const std::string& sample_id() const { return sample_id_; }
    const std::string& model_name() const { return model_name_; }

private:
    std::string sample_id_;
    std::string model_name_;
};

} // namespace ceocr
