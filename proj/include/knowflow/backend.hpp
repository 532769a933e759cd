#pragma once

#include <chrono>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "knowflow/errors.hpp"

namespace knowflow {

enum class Role { system, user, assistant, tool };

Role role_from_string(const std::string& token);
std::string to_string(Role role);

struct Message {
    Role role;
    std::string content;
};

bool operator==(const Message& a, const Message& b);

/// Stable SHA-256 over the canonicalized message list; identical across
/// processes and sessions so recorded fingerprints resolve in later replays.
std::string fingerprint(const std::vector<Message>& messages);

/// One request/response pair against a text-generation service.
struct BackendExchange {
    std::vector<Message> request;
    std::string response;
    std::string fingerprint;
    std::chrono::milliseconds latency{0};
};

struct ScenarioEntry {
    enum class Match { fingerprint, position, pattern };
    Match match = Match::pattern;
    std::string key;          // fingerprint hex or pattern substring
    std::size_t position = 0; // request ordinal for Match::position
    std::string response;
};

struct ScenarioToolEntry {
    std::string name;
    std::string args_key; // canonicalized arguments this entry answers
    std::string result;
    bool ok = true;
};

/// Canned responses keyed by fingerprint, request ordinal, or content pattern.
/// Lookup priority is fingerprint > position > pattern; pattern entries are
/// tried in file order, so author the most specific patterns first.
struct ScriptedScenario {
    std::vector<ScenarioEntry> entries;
    std::vector<ScenarioToolEntry> tools;
    bool strict = true; // unmatched request: error when true, echo when false
};

ScriptedScenario parse_scenario(const std::string& text);
ScriptedScenario load_scenario(const std::string& path);
std::string serialize_scenario(const ScriptedScenario& scenario);
void save_scenario(const ScriptedScenario& scenario, const std::string& path);

class Backend {
public:
    virtual ~Backend() = default;
    virtual BackendExchange complete(const std::vector<Message>& messages) = 0;
};

/// Deterministic backend for tests and replays. Keeps a request log so tests
/// can assert exactly what the engine asked.
class ScriptedBackend : public Backend {
public:
    explicit ScriptedBackend(ScriptedScenario scenario);

    BackendExchange complete(const std::vector<Message>& messages) override;

    const ScriptedScenario& scenario() const { return scenario_; }
    std::vector<std::vector<Message>> request_log() const;
    std::size_t requests_served() const;

private:
    ScriptedScenario scenario_;
    mutable std::mutex mutex_;
    std::size_t position_ = 0;
    std::vector<std::vector<Message>> log_;
};

struct RemoteConfig {
    std::string base_url; // e.g. http://host:port/v1
    std::string model;
    std::string api_key;
    int retries = 2;
    std::chrono::milliseconds timeout{30000};
};

/// Chat-completions HTTP client with bounded transport retries.
class RemoteBackend : public Backend {
public:
    explicit RemoteBackend(RemoteConfig config);
    BackendExchange complete(const std::vector<Message>& messages) override;

private:
    RemoteConfig config_;
    std::string scheme_host_port_;
    std::string path_prefix_;
};

struct BackendDescriptor {
    enum class Kind { scripted, remote };
    Kind kind = Kind::scripted;
    std::string scenario_path; // Kind::scripted
    RemoteConfig remote;       // Kind::remote
};

BackendDescriptor scripted_descriptor(const std::string& scenario_path);

/// Remote descriptor from KNOWFLOW_API_BASE / KNOWFLOW_API_KEY / KNOWFLOW_MODEL.
BackendDescriptor remote_descriptor_from_env();

std::shared_ptr<Backend> make_backend(const BackendDescriptor& descriptor);

} // namespace knowflow
