#pragma once

#include <stdexcept>
#include <string>

namespace glhm {

//! Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define GLHM_DEFINE_ERROR(Name)                                                \
    class Name : public Error {                                                \
    public:                                                                    \
        explicit Name(const std::string& what) : Error(#Name ": " + what) {}   \
    }

GLHM_DEFINE_ERROR(NearFocalSet);
GLHM_DEFINE_ERROR(NormalizationFailure);
GLHM_DEFINE_ERROR(QuadratureFailure);
GLHM_DEFINE_ERROR(SupportOutOfDomain);
GLHM_DEFINE_ERROR(BallOutOfDomain);
GLHM_DEFINE_ERROR(SupportViolation);
GLHM_DEFINE_ERROR(NonConvergence);
GLHM_DEFINE_ERROR(RankMismatch);
GLHM_DEFINE_ERROR(NotIndependent);
GLHM_DEFINE_ERROR(LadderExhausted);
GLHM_DEFINE_ERROR(NoConvergence);
GLHM_DEFINE_ERROR(LeftBasin);
GLHM_DEFINE_ERROR(OverlappingSubBalls);
GLHM_DEFINE_ERROR(ShellOutOfDomain);
GLHM_DEFINE_ERROR(CircleOutOfDomain);
GLHM_DEFINE_ERROR(ZeroAngularEnergy);
GLHM_DEFINE_ERROR(InvalidArgument);
GLHM_DEFINE_ERROR(ConfigError);
GLHM_DEFINE_ERROR(IoError);

#undef GLHM_DEFINE_ERROR

} // namespace glhm
