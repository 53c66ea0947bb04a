#ifndef SOCBENCH_ERROR_HPP
#define SOCBENCH_ERROR_HPP

#include <stdexcept>
#include <string>

namespace socbench {

// Base for every error raised by the library. The CLI maps subclasses to
// exit codes (see tools/socbench_cli.cpp).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed input data: layouts, JSON records, answer strings.
class InputError : public Error {
public:
    using Error::Error;
};

class LayoutError : public InputError {
public:
    using InputError::InputError;
};

class UnreachableError : public Error {
public:
    using Error::Error;
};

// A sampled scene could not produce a valid instance; generators retry.
class GenerationError : public Error {
public:
    using Error::Error;
};

// A Bayes normalizer vanished.
class DegenerateError : public Error {
public:
    using Error::Error;
};

class NoFeasibleParams : public Error {
public:
    using Error::Error;
};

// Remote LLM endpoint failed after all retries.
class UpstreamError : public Error {
public:
    using Error::Error;
};

} // namespace socbench

#endif
