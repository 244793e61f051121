#pragma once

#include <stdexcept>
#include <string>

namespace dtdr {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define DTDR_DECLARE_ERROR(Name)            \
  class Name : public Error {               \
   public:                                  \
    using Error::Error;                     \
  }

DTDR_DECLARE_ERROR(MalformedRef);
DTDR_DECLARE_ERROR(UnknownTool);
DTDR_DECLARE_ERROR(EmptyCorpus);
DTDR_DECLARE_ERROR(DimMismatch);
DTDR_DECLARE_ERROR(RemoteUnavailable);
DTDR_DECLARE_ERROR(DegenerateInput);
DTDR_DECLARE_ERROR(NonFiniteLoss);
DTDR_DECLARE_ERROR(MissingRetrieval);
DTDR_DECLARE_ERROR(UnparseableSelection);
DTDR_DECLARE_ERROR(UnparseableArgs);
DTDR_DECLARE_ERROR(BackendUnavailable);
DTDR_DECLARE_ERROR(LlmUnavailable);
DTDR_DECLARE_ERROR(EmptyEval);
DTDR_DECLARE_ERROR(CatalogMismatch);
DTDR_DECLARE_ERROR(TemplateError);

#undef DTDR_DECLARE_ERROR

/// Input does not match the expected file schema. `locus` names the
/// offending location, e.g. "demos.jsonl:12: plan[2].tool".
class SchemaError : public Error {
 public:
  SchemaError(std::string locus, const std::string& message)
      : Error(locus.empty() ? message : locus + ": " + message),
        locus_(std::move(locus)) {}

  const std::string& locus() const noexcept { return locus_; }

 private:
  std::string locus_;
};

}  // namespace dtdr
