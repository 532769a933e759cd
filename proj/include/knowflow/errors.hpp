#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace knowflow {

/// Base class for every error raised by the engine.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A caller violated an operation's precondition (empty query, empty trajectory, ...).
class InvalidInputError : public Error {
public:
    using Error::Error;
};

/// Malformed wire text (graph, plan, scenario, checkpoint).
class ParseError : public Error {
public:
    explicit ParseError(const std::string& msg, std::size_t line = 0)
        : Error(msg), line_(line) {}
    /// 1-based line of the syntax error, 0 when unknown.
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

/// Transport or protocol failure talking to a text-generation service.
class BackendError : public Error {
public:
    using Error::Error;
};

/// Strict scripted scenario had no entry for a request.
class ScenarioMissError : public BackendError {
public:
    ScenarioMissError(const std::string& msg, std::string fingerprint)
        : BackendError(msg), fingerprint_(std::move(fingerprint)) {}
    const std::string& fingerprint() const { return fingerprint_; }

private:
    std::string fingerprint_;
};

/// Planner backend kept producing unusable output after all repair prompts.
class PlannerOutputError : public Error {
public:
    PlannerOutputError(const std::string& msg, std::string raw_output)
        : Error(msg), raw_output_(std::move(raw_output)) {}
    const std::string& raw_output() const { return raw_output_; }

private:
    std::string raw_output_;
};

/// A graph op referenced a node or edge that does not exist.
class MissingTargetError : public Error {
public:
    using Error::Error;
};

/// A graph op would introduce a duplicate node id or edge pair.
class DuplicateError : public Error {
public:
    using Error::Error;
};

/// A graph op tried to delete or retype the query node.
class ProtectedNodeError : public Error {
public:
    using Error::Error;
};

/// First failing op of a refinement plan, annotated with its index.
class PlanApplyError : public Error {
public:
    PlanApplyError(const std::string& msg, std::size_t op_index, std::string cause_kind)
        : Error(msg), op_index_(op_index), cause_kind_(std::move(cause_kind)) {}
    std::size_t op_index() const { return op_index_; }
    /// Kind of the underlying error ("structural", "missing-target", ...).
    const std::string& cause_kind() const { return cause_kind_; }

private:
    std::size_t op_index_;
    std::string cause_kind_;
};

class UnknownToolError : public Error {
public:
    using Error::Error;
};

/// conclude() was called on a graph whose query node is already terminal.
class AlreadyConcludedError : public Error {
public:
    using Error::Error;
};

/// collect_round() found nothing executable; the caller decides (refine or abort).
class NoProgressError : public Error {
public:
    using Error::Error;
};

class NothingToExportError : public Error {
public:
    using Error::Error;
};

class RangeError : public Error {
public:
    using Error::Error;
};

class CheckpointError : public Error {
public:
    using Error::Error;
};

/// Resume refused because the config does not belong to the checkpointed run.
class IncompatibleConfigError : public Error {
public:
    using Error::Error;
};

} // namespace knowflow
