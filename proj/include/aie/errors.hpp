#pragma once

#include <stdexcept>
#include <string>

namespace aie {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

#define AIE_ERROR_TYPE(Name)          \
    struct Name : Error {             \
        using Error::Error;           \
    }

// core model
AIE_ERROR_TYPE(EmptyContent);
AIE_ERROR_TYPE(NoSuchProbe);
AIE_ERROR_TYPE(NoSuchTurn);
AIE_ERROR_TYPE(NotAgentTurn);

// distance
AIE_ERROR_TYPE(DimensionMismatch);
AIE_ERROR_TYPE(ZeroVector);
AIE_ERROR_TYPE(DimTooSmall);
AIE_ERROR_TYPE(EmbedderUnavailable);

// metrics
AIE_ERROR_TYPE(EmptyReps);
AIE_ERROR_TYPE(EmptyReferences);
AIE_ERROR_TYPE(EmptyChecks);
AIE_ERROR_TYPE(TooFewOutputs);
AIE_ERROR_TYPE(TooFewSnapshots);
AIE_ERROR_TYPE(EmptyRecoverySequence);
AIE_ERROR_TYPE(InsufficientHistory);
AIE_ERROR_TYPE(EmptyScores);
AIE_ERROR_TYPE(NegativeWeight);
AIE_ERROR_TYPE(EmptySnapshots);

// agents
AIE_ERROR_TYPE(UnknownFactKey);
AIE_ERROR_TYPE(MissingApiKey);
AIE_ERROR_TYPE(Transport);
AIE_ERROR_TYPE(MalformedResponse);
AIE_ERROR_TYPE(EmptyCompletion);
AIE_ERROR_TYPE(EmptyDistractor);

// protocols
AIE_ERROR_TYPE(ParseFailure);

// stats
AIE_ERROR_TYPE(EmptySample);
AIE_ERROR_TYPE(LengthMismatch);
AIE_ERROR_TYPE(TooFewPoints);
AIE_ERROR_TYPE(ZeroVarianceBoth);

// io
AIE_ERROR_TYPE(NotFound);
AIE_ERROR_TYPE(ParseError);
AIE_ERROR_TYPE(IoError);
AIE_ERROR_TYPE(EmptyReports);

#undef AIE_ERROR_TYPE

// Non-2xx HTTP reply; carries the status and the first bytes of the body.
struct HttpStatus : Error {
    int status;
    std::string body_excerpt;
    HttpStatus(int status_, std::string body_excerpt_)
        : Error("http status " + std::to_string(status_) + ": " + body_excerpt_),
          status(status_),
          body_excerpt(std::move(body_excerpt_)) {}
};

// Config validation failure; message is always "<key>: <constraint>".
struct ValidationError : Error {
    std::string key;
    std::string constraint;
    ValidationError(std::string key_, std::string constraint_)
        : Error(key_ + ": " + constraint_),
          key(std::move(key_)),
          constraint(std::move(constraint_)) {}
};

}  // namespace aie
