#pragma once

#include <stdexcept>
#include <string>

namespace bilevel {

// Root of every error raised by the toolkit. Each subclass maps to one
// failure class of the public operations; the CLI turns them into exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SyntaxError : public Error {
 public:
  SyntaxError(int line, int col, const std::string& what)
      : Error("line " + std::to_string(line) + ", col " + std::to_string(col) + ": " + what),
        line_(line),
        col_(col) {}
  int line() const { return line_; }
  int col() const { return col_; }

 private:
  int line_;
  int col_;
};

#define BILEVEL_DEFINE_ERROR(Name)   \
  class Name : public Error {        \
   public:                           \
    using Error::Error;              \
  };

BILEVEL_DEFINE_ERROR(IndexError)
BILEVEL_DEFINE_ERROR(SemanticsError)
BILEVEL_DEFINE_ERROR(DomainError)
BILEVEL_DEFINE_ERROR(BudgetError)
BILEVEL_DEFINE_ERROR(Infeasible)
BILEVEL_DEFINE_ERROR(InfeasiblePoint)
BILEVEL_DEFINE_ERROR(DimensionMismatch)
BILEVEL_DEFINE_ERROR(EmptySet)
BILEVEL_DEFINE_ERROR(NotPolyhedral)
BILEVEL_DEFINE_ERROR(NotApplicable)
BILEVEL_DEFINE_ERROR(UnsupportedDimension)
BILEVEL_DEFINE_ERROR(EmptyEstimate)

#undef BILEVEL_DEFINE_ERROR

}  // namespace bilevel
