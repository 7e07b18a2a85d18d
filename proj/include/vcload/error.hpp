#pragma once

#include <stdexcept>
#include <string>

namespace vcload {

/// Base of every error raised by the library. `code()` is a short stable
/// token used by the CLI for its machine-parsable error line.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& what)
        : std::runtime_error(what), code_(std::move(code)) {}

    const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

#define VCLOAD_DEFINE_ERROR(Name, token)                                     \
    class Name : public Error {                                              \
    public:                                                                  \
        explicit Name(const std::string& what) : Error(token, what) {}     \
    };

VCLOAD_DEFINE_ERROR(ConfigError, "config")
VCLOAD_DEFINE_ERROR(EvaluationError, "evaluation")
VCLOAD_DEFINE_ERROR(IndexError, "index")
VCLOAD_DEFINE_ERROR(ShapeError, "shape")
VCLOAD_DEFINE_ERROR(AlignmentError, "alignment")
VCLOAD_DEFINE_ERROR(EmptyDesignError, "empty-design")
VCLOAD_DEFINE_ERROR(RankDeficiencyError, "rank-deficient")
VCLOAD_DEFINE_ERROR(FitError, "fit")
VCLOAD_DEFINE_ERROR(ForecastError, "forecast")
VCLOAD_DEFINE_ERROR(ModeError, "mode")
VCLOAD_DEFINE_ERROR(InferenceUnavailableError, "inference-unavailable")
VCLOAD_DEFINE_ERROR(DegenerateTruncationError, "degenerate-truncation")
VCLOAD_DEFINE_ERROR(NumericalInconsistencyError, "numerical-inconsistency")
VCLOAD_DEFINE_ERROR(IntervalUnavailableError, "interval-unavailable")
VCLOAD_DEFINE_ERROR(MetricError, "metric")
VCLOAD_DEFINE_ERROR(WindowError, "window")
VCLOAD_DEFINE_ERROR(IngestError, "ingest")
VCLOAD_DEFINE_ERROR(ModelFileError, "model-file")

#undef VCLOAD_DEFINE_ERROR

} // namespace vcload
