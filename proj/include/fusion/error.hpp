#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace fusion {

// Base for all user-facing errors; kind() is the stable error name.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& msg)
      : std::runtime_error(kind + ": " + msg), kind_(std::move(kind)) {}
  const std::string& kind() const { return kind_; }

 private:
  std::string kind_;
};

#define FUSION_ERROR(Name)                                              \
  class Name : public Error {                                           \
   public:                                                              \
    explicit Name(const std::string& msg) : Error(#Name, msg) {}        \
  };

FUSION_ERROR(StructuralError)
FUSION_ERROR(KeyError)
FUSION_ERROR(DomainError)
FUSION_ERROR(UnsupportedFamily)
FUSION_ERROR(NuisanceMissing)
FUSION_ERROR(DegenerateNormalizer)
FUSION_ERROR(InsufficientData)
FUSION_ERROR(NonBinaryTreatment)
FUSION_ERROR(SingularJacobian)
FUSION_ERROR(AllSingular)
FUSION_ERROR(BadLevel)
FUSION_ERROR(NegativeDelta)
FUSION_ERROR(ParseError)
FUSION_ERROR(MissingColumn)
FUSION_ERROR(NonNumericCell)
FUSION_ERROR(EmptyFile)
FUSION_ERROR(InvalidShape)

#undef FUSION_ERROR

// Non-fatal events collected while fitting and evaluating.
struct Diagnostics {
  long ratio_clips = 0;        // w* or lambda values clipped
  long normalizer_floors = 0;  // raw normalizer fit <= floor
  long empty_neighborhoods = 0;
  long propensity_clips = 0;
  long ridge_fallbacks = 0;
  long rank_warnings = 0;      // fusion matrix deficiency > 1
  bool singular_information = false;
  bool beta_converged = true;
  std::vector<std::string> warnings;

  void warn(const std::string& w);
  void merge(const Diagnostics& o);
};

}  // namespace fusion
