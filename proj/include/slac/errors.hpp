#pragma once

#include <stdexcept>
#include <string>

namespace slac {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define SLAC_DEFINE_ERROR(Name)                                   \
    class Name : public Error {                                   \
    public:                                                       \
        explicit Name(const std::string& what) : Error(what) {}   \
    };

SLAC_DEFINE_ERROR(InvalidArgument)
SLAC_DEFINE_ERROR(SourceOnArray)
SLAC_DEFINE_ERROR(DimensionMismatch)
SLAC_DEFINE_ERROR(MissingPrior)
SLAC_DEFINE_ERROR(RankDeficient)
SLAC_DEFINE_ERROR(BudgetExceeded)
SLAC_DEFINE_ERROR(NoPathDetected)
SLAC_DEFINE_ERROR(EmptyDataset)
SLAC_DEFINE_ERROR(DegenerateGeometry)
SLAC_DEFINE_ERROR(ZeroTruth)
SLAC_DEFINE_ERROR(IoError)

#undef SLAC_DEFINE_ERROR

/// Configuration error; `key()` names the offending entry.
class ConfigError : public Error {
public:
    ConfigError(std::string key, const std::string& msg)
        : Error(key + ": " + msg), key_(std::move(key)) {}
    const std::string& key() const noexcept { return key_; }

private:
    std::string key_;
};

}  // namespace slac
