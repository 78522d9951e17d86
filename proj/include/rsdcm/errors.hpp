#pragma once

#include <stdexcept>
#include <string>

namespace rsdcm {

// Error categories map onto CLI exit codes: config 2, numerical 3, io 4.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct InvalidArgumentError : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

struct NumericalError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

}  // namespace rsdcm
