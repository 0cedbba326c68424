#pragma once

#include <stdexcept>
#include <string>

namespace defocus {

// Malformed or truncated on-disk data (PGM, CSV, model files).
class FormatError : public std::runtime_error {
public:
    explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

// Training produced a non-finite loss.
class DivergenceError : public std::runtime_error {
public:
    DivergenceError(const std::string& what, long step)
        : std::runtime_error(what + " (step " + std::to_string(step) + ")"), step_(step) {}
    long step() const { return step_; }

private:
    long step_;
};

// PSF support would exceed the configured kernel radius cap.
class KernelSizeError : public std::runtime_error {
public:
    KernelSizeError(const std::string& what, int level)
        : std::runtime_error(what + " (level " + std::to_string(level) + ")"), level_(level) {}
    int level() const { return level_; }

private:
    int level_;
};

}  // namespace defocus
