#ifndef MIDTUNE_ERRORS_HPP
#define MIDTUNE_ERRORS_HPP

#include <cstddef>
#include <stdexcept>
#include <string>

namespace midtune {

// Base class for everything thrown by this library.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Data / format errors -------------------------------------------------

struct ParseError : Error {
    std::size_t byte_offset = 0;
    ParseError(const std::string& msg, std::size_t offset)
        : Error(msg + " (byte " + std::to_string(offset) + ")"), byte_offset(offset) {}
};

struct SchemaError : Error {
    using Error::Error;
};

struct ValidationError : Error {
    using Error::Error;
};

struct TagSequenceError : Error {
    std::size_t line = 0;
    TagSequenceError(const std::string& msg, std::size_t line_no)
        : Error(msg + " (line " + std::to_string(line_no) + ")"), line(line_no) {}
};

struct EmptyInputError : Error {
    using Error::Error;
};

// Corruption preconditions ---------------------------------------------

struct TooFewRolesError : Error {
    using Error::Error;
};

struct NoFillerError : Error {
    using Error::Error;
};

struct NotSwappableError : Error {
    using Error::Error;
};

struct CorpusTooSmallError : Error {
    using Error::Error;
};

// Numerics / model ------------------------------------------------------

struct ShapeError : Error {
    using Error::Error;
};

struct VocabError : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

struct OptimizerError : Error {
    using Error::Error;
};

struct DivergenceError : Error {
    std::size_t step = 0;
    DivergenceError(const std::string& msg, std::size_t step_no)
        : Error(msg + " (step " + std::to_string(step_no) + ")"), step(step_no) {}
};

// Evaluation / retrieval -------------------------------------------------

struct RangeError : Error {
    using Error::Error;
};

struct CapacityError : Error {
    using Error::Error;
};

struct DegenerateError : Error {
    using Error::Error;
};

struct DegenerateEmbeddingError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

}  // namespace midtune

#endif  // MIDTUNE_ERRORS_HPP
