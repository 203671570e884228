#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace crust {

// Non-finite or otherwise malformed values fed to a numeric kernel.
struct invalid_input : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// A structurally impossible request: bad architecture, bad synthesis
// parameters, out-of-range budgets.
struct invalid_spec : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Text inputs (dataset files, config files) that fail to parse. Carries the
// 1-based line and column of the first offending byte.
struct parse_error : std::runtime_error {
    parse_error(const std::string& msg, std::size_t line, std::size_t column)
        : std::runtime_error(msg + " (line " + std::to_string(line) + ", col " +
                             std::to_string(column) + ")"),
          line(line),
          column(column) {}

    std::size_t line;
    std::size_t column;
};

// A computation refused because it would exceed a deliberate memory budget.
struct resource_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Training loss blew past the guard threshold; carries the offending value.
struct divergence_error : std::runtime_error {
    divergence_error(const std::string& msg, double loss)
        : std::runtime_error(msg), loss(loss) {}

    double loss;
};

}  // namespace crust
