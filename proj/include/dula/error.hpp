#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dula {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed caller input (non-finite angles, negative loads, bad config values).
class InvalidInput : public Error {
public:
    using Error::Error;
};

/// A sub-score fell outside its worksheet range. Indicates a bug, never user error.
class InternalConsistency : public Error {
public:
    using Error::Error;
};

/// Balanced generation could not fill a label quota within the draw budget.
class QuotaFailure : public Error {
public:
    QuotaFailure(int label, std::size_t have, std::size_t need)
        : Error("label " + std::to_string(label) + " starved: " + std::to_string(have) +
                " of " + std::to_string(need) + " samples after exhausting max_attempts"),
          label_(label) {}
    int label() const noexcept { return label_; }

private:
    int label_;
};

/// Training loss became non-finite or exceeded the divergence bound.
class TrainingFailure : public Error {
public:
    TrainingFailure(std::size_t epoch, double loss)
        : Error("training diverged at epoch " + std::to_string(epoch) +
                " (loss = " + std::to_string(loss) + ")"),
          epoch_(epoch) {}
    std::size_t epoch() const noexcept { return epoch_; }

private:
    std::size_t epoch_;
};

/// The surrogate produced a non-finite value during optimization.
class ModelFailure : public Error {
public:
    using Error::Error;
};

/// File format / schema problems when reading artifacts.
class FormatError : public Error {
public:
    using Error::Error;
};

}  // namespace dula
