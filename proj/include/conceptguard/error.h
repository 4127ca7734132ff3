#ifndef CONCEPTGUARD_ERROR_H_
#define CONCEPTGUARD_ERROR_H_

#include <cstdint>
#include <stdexcept>
#include <string>

namespace conceptguard {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input file. `line` is 1-based; 0 means the whole file.
class ParseError : public Error {
 public:
  ParseError(const std::string& file, size_t line, const std::string& what)
      : Error(file + ":" + std::to_string(line) + ": " + what), line_(line) {}
  size_t line() const { return line_; }

 private:
  size_t line_;
};

// A combinatorial enumeration would exceed its configured budget.
class BudgetExceeded : public Error {
 public:
  BudgetExceeded(const std::string& what, uint64_t required, uint64_t budget)
      : Error(what + ": " + std::to_string(required) +
              " combinations required, budget is " + std::to_string(budget)),
        required_(required) {}
  uint64_t required() const { return required_; }

 private:
  uint64_t required_;
};

}  // namespace conceptguard

#endif  // CONCEPTGUARD_ERROR_H_
