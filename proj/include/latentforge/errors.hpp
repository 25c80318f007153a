#pragma once

#include <stdexcept>
#include <string>

namespace latentforge {

// Malformed or inconsistent bytes on disk (bad magic, truncated payload,
// impossible shape). Maps to CLI exit code 2, like std::invalid_argument.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A computation produced or received a non-finite value, or a numeric
// postcondition failed (e.g. imaginary residue after an inverse FFT).
// Maps to CLI exit code 3.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Replay asked the feature cache for a (step, layer) pair that was never
// recorded. Carries both so the caller can report exactly what was missing.
// Maps to CLI exit code 4.
class InjectionMissError : public std::runtime_error {
public:
    InjectionMissError(int step, std::string layer)
        : std::runtime_error("injection miss: no cached features for step " +
                             std::to_string(step) + ", layer '" + layer + "'"),
          step_(step),
          layer_(std::move(layer)) {}

    int step() const { return step_; }
    const std::string& layer() const { return layer_; }

private:
    int step_;
    std::string layer_;
};

}  // namespace latentforge
