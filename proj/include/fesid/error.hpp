#pragma once

#include <stdexcept>
#include <string>

namespace fesid {

/// Failure inside inference or model evaluation (CLI exit code 1).
class InferenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Failure reading or writing data, configs or artifacts (CLI exit code 2).
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {

inline void require(bool cond, const std::string& msg)
{
    if (!cond) throw std::invalid_argument(msg);
}

} // namespace detail

} // namespace fesid
