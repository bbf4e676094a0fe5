#pragma once

#include <stdexcept>
#include <string>

namespace bioconv {

// Root bracket does not change sign.
class BracketError : public std::runtime_error {
public:
    BracketError(const std::string& what, double a, double b, double fa, double fb)
        : std::runtime_error(what), a_(a), b_(b), fa_(fa), fb_(fb) {}
    double a() const { return a_; }
    double b() const { return b_; }
    double fa() const { return fa_; }
    double fb() const { return fb_; }

private:
    double a_, b_, fa_, fb_;
};

// An iteration hit its cap without meeting tolerance.
class ConvergenceError : public std::runtime_error {
public:
    ConvergenceError(const std::string& what, int iterations, double residual)
        : std::runtime_error(what), iterations_(iterations), residual_(residual) {}
    int iterations() const { return iterations_; }
    double residual() const { return residual_; }

private:
    int iterations_;
    double residual_;
};

class SingularPencilError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
public:
    ConfigError(const std::string& what, std::string key = {}, int line = 0)
        : std::runtime_error(what), key_(std::move(key)), line_(line) {}
    const std::string& key() const { return key_; }
    int line() const { return line_; }

private:
    std::string key_;
    int line_;
};

}  // namespace bioconv
