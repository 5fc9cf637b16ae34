#pragma once

#include <stdexcept>
#include <string>

namespace msa {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid network/training/generator configuration. Raised before any compute.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// A function was called with arguments that violate its contract (shape mismatch, out-of-range value).
class ArgumentError : public Error {
public:
    using Error::Error;
};

/// No foreground embedding was available to build prototypes from.
class EmptyForeground : public Error {
public:
    EmptyForeground() : Error("no foreground pixels at embedding resolution") {}
};

/// The supervised contrastive term has no anchor with a positive partner.
class NoPositivePairs : public Error {
public:
    NoPositivePairs() : Error("no positive pair among valid embedding pixels") {}
};

/// A boundary distance is undefined because one of the masks is empty.
class UndefinedDistance : public Error {
public:
    UndefinedDistance() : Error("boundary distance undefined for an empty mask") {}
};

/// Training diverged; `batch_id` names the offending batch.
class NonFiniteLoss : public Error {
public:
    explicit NonFiniteLoss(std::string batch_id)
        : Error("non-finite loss at " + batch_id), batch_id_(std::move(batch_id)) {}

    const std::string& batch_id() const noexcept { return batch_id_; }

private:
    std::string batch_id_;
};

/// File system or decoding failure (missing file, bad PNG, corrupt checkpoint).
class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace msa
