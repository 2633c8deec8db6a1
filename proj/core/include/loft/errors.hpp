#pragma once

#include <stdexcept>
#include <string>

namespace loft {

// Base class for every error thrown by the library. Subclasses exist so
// callers (and tests) can distinguish failure kinds without parsing text.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Incompatible tensor shapes. The message always names both shapes.
class ShapeError : public Error {
public:
    using Error::Error;
};

// Non-finite or otherwise out-of-domain numeric input.
class DomainError : public Error {
public:
    using Error::Error;
};

// Malformed file or byte stream. The message names the offending offset
// where one is known.
class FormatError : public Error {
public:
    using Error::Error;
};

// LoRA rank out of range for the layer dimensions.
class RankError : public Error {
public:
    using Error::Error;
};

// Invalid architecture / run configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Token id outside the vocabulary.
class VocabError : public Error {
public:
    using Error::Error;
};

// Gradient requested for a frozen or quantized tensor.
class FrozenParamError : public Error {
public:
    using Error::Error;
};

// Optimizer rejected its input (e.g. non-finite gradient).
class OptimError : public Error {
public:
    using Error::Error;
};

// Workers disagree on a collective's preconditions (step counter, phase,
// shape) or replicas diverged.
class ProtocolError : public Error {
public:
    using Error::Error;
};

// Replica states that must be identical have diverged.
class SyncError : public Error {
public:
    using Error::Error;
};

// Batch cannot be sharded over the requested worker count.
class ShardError : public Error {
public:
    using Error::Error;
};

// Pipeline partition does not fit the model.
class PartitionError : public Error {
public:
    using Error::Error;
};

// Malformed dataset line. The message names the 1-based line number.
class ParseError : public Error {
public:
    using Error::Error;
};

// Dataset record missing a required field.
class SchemaError : public Error {
public:
    using Error::Error;
};

// Gold label outside the declared class set.
class LabelError : public Error {
public:
    using Error::Error;
};

// Mismatched argument lengths or similar caller mistakes.
class InputError : public Error {
public:
    using Error::Error;
};

}  // namespace loft
