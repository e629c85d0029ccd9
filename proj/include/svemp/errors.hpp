#pragma once

#include <stdexcept>
#include <string>

namespace svemp {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define SVEMP_DEFINE_ERROR(Name)               \
    class Name : public Error {                \
    public:                                    \
        using Error::Error;                    \
    }

SVEMP_DEFINE_ERROR(DomainError);
SVEMP_DEFINE_ERROR(SingularityError);
SVEMP_DEFINE_ERROR(QuadratureError);
SVEMP_DEFINE_ERROR(DivergentIntegral);
SVEMP_DEFINE_ERROR(GridTooCoarse);
SVEMP_DEFINE_ERROR(MissingDerivative);
SVEMP_DEFINE_ERROR(GrowthViolation);
SVEMP_DEFINE_ERROR(NonFiniteState);
SVEMP_DEFINE_ERROR(GridMismatch);
SVEMP_DEFINE_ERROR(SeedMismatch);
SVEMP_DEFINE_ERROR(InsufficientPaths);
SVEMP_DEFINE_ERROR(NotConvolution);
SVEMP_DEFINE_ERROR(ConfigError);
SVEMP_DEFINE_ERROR(ArchiveCorrupt);
SVEMP_DEFINE_ERROR(ReplayMismatch);

#undef SVEMP_DEFINE_ERROR

}  // namespace svemp
