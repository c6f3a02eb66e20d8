#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace cstat {

// Input and configuration problems: bad arguments, malformed files, schema
// violations, checksum mismatches. The CLI maps these to exit code 2.
class validation_error : public std::invalid_argument {
public:
    validation_error(std::string code, const std::string& what)
        : std::invalid_argument(what), code_(std::move(code)) {}

    const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

// Failures while computing: non-convergence, singular systems, degenerate
// reference distributions, I/O faults. The CLI maps these to exit code 1.
class computation_error : public std::runtime_error {
public:
    computation_error(std::string code, const std::string& what)
        : std::runtime_error(what), code_(std::move(code)) {}

    const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

// Shortest decimal form that parses back to the identical double.
std::string format_double(double x);

// Writes to a sibling temp file and renames over the target, so readers
// never observe a partially written file.
void atomic_write_file(const std::string& path, const std::string& contents);
std::string read_file(const std::string& path);

} // namespace cstat
