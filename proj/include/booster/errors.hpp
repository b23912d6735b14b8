#pragma once

#include <stdexcept>
#include <string>

namespace booster {

// Base of every error raised by the library. Callers that only need to
// distinguish "our" failures from std failures can catch this.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define BOOSTER_DEFINE_ERROR(Name)                                    \
    class Name : public Error {                                       \
    public:                                                           \
        explicit Name(const std::string& what) : Error(#Name ": " + what) {} \
    }

// sim_env
BOOSTER_DEFINE_ERROR(UnsatisfiableHints);
BOOSTER_DEFINE_ERROR(UnknownObject);
BOOSTER_DEFINE_ERROR(InvalidInput);

// artifact_repo
BOOSTER_DEFINE_ERROR(UnknownAdapter);
BOOSTER_DEFINE_ERROR(ReplayFailure);

// schematic_embed
BOOSTER_DEFINE_ERROR(EmbedderUnavailable);

// vector_store
BOOSTER_DEFINE_ERROR(DuplicateId);
BOOSTER_DEFINE_ERROR(EmptySegment);
BOOSTER_DEFINE_ERROR(UnknownId);

// recommend
BOOSTER_DEFINE_ERROR(ProviderUnavailable);

#undef BOOSTER_DEFINE_ERROR

// Raised by artifact parsing. Carries the offending step and a JSON-pointer
// style path to the field.
class MalformedArtifact : public Error {
public:
    MalformedArtifact(long step, std::string field_path, const std::string& why)
        : Error("MalformedArtifact: step " + std::to_string(step) + " at " +
                field_path + ": " + why),
          step_(step),
          field_path_(std::move(field_path)) {}

    long step() const noexcept { return step_; }
    const std::string& field_path() const noexcept { return field_path_; }

private:
    long step_;
    std::string field_path_;
};

}  // namespace booster
