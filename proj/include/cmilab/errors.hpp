#pragma once

#include <stdexcept>
#include <string>

namespace cmilab {

// All library failures derive from Error so callers (the CLI in particular)
// can map them onto exit codes with a single catch.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define CMILAB_ERROR_TYPE(Name, tag)                                   \
  class Name : public Error {                                          \
   public:                                                             \
    explicit Name(const std::string& what) : Error(tag, what) {}       \
  };

CMILAB_ERROR_TYPE(ValidationError, "validation")
CMILAB_ERROR_TYPE(LayoutError, "layout")
CMILAB_ERROR_TYPE(CapError, "cap")
CMILAB_ERROR_TYPE(NumericalError, "numerical")
CMILAB_ERROR_TYPE(SingularityError, "singularity")
CMILAB_ERROR_TYPE(ModeError, "mode")
CMILAB_ERROR_TYPE(ConflictError, "conflict")
CMILAB_ERROR_TYPE(SupportError, "support")
CMILAB_ERROR_TYPE(PreconditionError, "precondition")
CMILAB_ERROR_TYPE(ConstructionError, "construction")
CMILAB_ERROR_TYPE(IoError, "io")

#undef CMILAB_ERROR_TYPE

}  // namespace cmilab
