#include "knowflow/backend.hpp"

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "knowflow/graph.hpp" // strip_trailing_commas

namespace knowflow {

using nlohmann::json;
using nlohmann::ordered_json;

Role role_from_string(const std::string& token) {
    if (token == "system") return Role::system;
    if (token == "user") return Role::user;
    if (token == "assistant") return Role::assistant;
    if (token == "tool") return Role::tool;
    throw ParseError("unknown message role \"" + token + "\"");
}

std::string to_string(Role role) {
    switch (role) {
        case Role::system: return "system";
        case Role::user: return "user";
        case Role::assistant: return "assistant";
        case Role::tool: return "tool";
    }
    return "user";
}

bool operator==(const Message& a, const Message& b) {
    return a.role == b.role && a.content == b.content;
}

std::string fingerprint(const std::vector<Message>& messages) {
    // Canonical encoding: role, unit separator, content, record separator.
    std::string canonical;
    for (const auto& m : messages) {
        canonical += to_string(m.role);
        canonical += '\x1f';
        canonical += m.content;
        canonical += '\x1e';
    }
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int digest_len = 0;
    EVP_Digest(canonical.data(), canonical.size(), digest, &digest_len, EVP_sha256(), nullptr);
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(digest_len * 2);
    for (unsigned int i = 0; i < digest_len; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 0x0f];
    }
    return out;
}

namespace {

std::size_t line_of_offset(const std::string& text, std::size_t byte) {
    std::size_t line = 1;
    for (std::size_t i = 0; i < byte && i < text.size(); ++i)
        if (text[i] == '\n') ++line;
    return line;
}

bool blank(const std::string& text) {
    for (char c : text)
        if (!std::isspace(static_cast<unsigned char>(c))) return false;
    return true;
}

} // namespace

ScriptedScenario parse_scenario(const std::string& text) {
    ScriptedScenario scenario;
    if (blank(text)) return scenario; // empty file: empty strict scenario

    json doc;
    try {
        doc = json::parse(strip_trailing_commas(text));
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("scenario parse error: ") + e.what(),
                         line_of_offset(text, e.byte));
    }
    if (!doc.is_object()) throw ParseError("scenario must be an object");

    if (doc.contains("strict")) {
        if (!doc.at("strict").is_boolean()) throw ParseError("\"strict\" must be a boolean");
        scenario.strict = doc.at("strict").get<bool>();
    }

    std::set<std::string> seen_fingerprints;
    std::set<std::size_t> seen_positions;
    for (const auto& item : doc.value("entries", json::array())) {
        if (!item.is_object() || !item.contains("match") || !item.contains("response"))
            throw ParseError("scenario entries need \"match\" and \"response\"");
        const json& match = item.at("match");
        if (!match.is_object() || match.size() != 1)
            throw ParseError("entry \"match\" must hold exactly one of fingerprint/position/pattern");
        ScenarioEntry entry;
        entry.response = item.at("response").get<std::string>();
        if (match.contains("fingerprint")) {
            entry.match = ScenarioEntry::Match::fingerprint;
            entry.key = match.at("fingerprint").get<std::string>();
            if (!seen_fingerprints.insert(entry.key).second)
                throw ParseError("duplicate fingerprint key " + entry.key);
        } else if (match.contains("position")) {
            entry.match = ScenarioEntry::Match::position;
            entry.position = match.at("position").get<std::size_t>();
            if (!seen_positions.insert(entry.position).second)
                throw ParseError("duplicate position key " + std::to_string(entry.position));
        } else if (match.contains("pattern")) {
            entry.match = ScenarioEntry::Match::pattern;
            entry.key = match.at("pattern").get<std::string>();
        } else {
            throw ParseError("entry \"match\" must be fingerprint, position, or pattern");
        }
        scenario.entries.push_back(std::move(entry));
    }

    for (const auto& item : doc.value("tools", json::array())) {
        if (!item.is_object() || !item.contains("name") || !item.contains("result"))
            throw ParseError("scenario tool entries need \"name\" and \"result\"");
        ScenarioToolEntry entry;
        entry.name = item.at("name").get<std::string>();
        entry.args_key = item.value("args_key", std::string{});
        entry.result = item.at("result").get<std::string>();
        entry.ok = item.value("ok", true);
        scenario.tools.push_back(std::move(entry));
    }

    for (auto it = doc.begin(); it != doc.end(); ++it)
        if (it.key() != "entries" && it.key() != "tools" && it.key() != "strict")
            throw ParseError("unknown scenario field \"" + it.key() + "\"");

    return scenario;
}

ScriptedScenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open scenario file " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_scenario(buf.str());
}

std::string serialize_scenario(const ScriptedScenario& scenario) {
    ordered_json doc;
    doc["strict"] = scenario.strict;
    doc["entries"] = ordered_json::array();
    for (const auto& e : scenario.entries) {
        ordered_json match;
        switch (e.match) {
            case ScenarioEntry::Match::fingerprint: match["fingerprint"] = e.key; break;
            case ScenarioEntry::Match::position: match["position"] = e.position; break;
            case ScenarioEntry::Match::pattern: match["pattern"] = e.key; break;
        }
        doc["entries"].push_back(ordered_json{{"match", match}, {"response", e.response}});
    }
    doc["tools"] = ordered_json::array();
    for (const auto& t : scenario.tools)
        doc["tools"].push_back(ordered_json{
            {"name", t.name}, {"args_key", t.args_key}, {"result", t.result}, {"ok", t.ok}});
    return doc.dump(1);
}

void save_scenario(const ScriptedScenario& scenario, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write scenario file " + path);
    out << serialize_scenario(scenario) << "\n";
}

ScriptedBackend::ScriptedBackend(ScriptedScenario scenario) : scenario_(std::move(scenario)) {}

BackendExchange ScriptedBackend::complete(const std::vector<Message>& messages) {
    if (messages.empty()) throw InvalidInputError("complete() requires at least one message");
    BackendExchange exchange;
    exchange.request = messages;
    exchange.fingerprint = knowflow::fingerprint(messages);

    std::string concatenated;
    for (const auto& m : messages) {
        if (!concatenated.empty()) concatenated += '\n';
        concatenated += m.content;
    }

    std::lock_guard<std::mutex> lock(mutex_);
    const std::size_t ordinal = position_++;
    log_.push_back(messages);

    const ScenarioEntry* hit = nullptr;
    for (const auto& e : scenario_.entries)
        if (e.match == ScenarioEntry::Match::fingerprint && e.key == exchange.fingerprint) {
            hit = &e;
            break;
        }
    if (!hit)
        for (const auto& e : scenario_.entries)
            if (e.match == ScenarioEntry::Match::position && e.position == ordinal) {
                hit = &e;
                break;
            }
    if (!hit)
        for (const auto& e : scenario_.entries)
            if (e.match == ScenarioEntry::Match::pattern &&
                concatenated.find(e.key) != std::string::npos) {
                hit = &e;
                break;
            }

    if (hit) {
        exchange.response = hit->response;
    } else if (scenario_.strict) {
        throw ScenarioMissError("no scenario entry for request with fingerprint " +
                                    exchange.fingerprint + " (position " +
                                    std::to_string(ordinal) + ")",
                                exchange.fingerprint);
    } else {
        exchange.response = messages.back().content; // echo
    }
    return exchange;
}

std::vector<std::vector<Message>> ScriptedBackend::request_log() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return log_;
}

std::size_t ScriptedBackend::requests_served() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return position_;
}

RemoteBackend::RemoteBackend(RemoteConfig config) : config_(std::move(config)) {
    if (config_.base_url.empty())
        throw BackendError("remote backend requires a base url");
    if (config_.api_key.empty())
        throw BackendError("remote backend requires an api key");
    // Split scheme://host:port from the path prefix; httplib wants them apart.
    auto scheme_end = config_.base_url.find("://");
    std::size_t path_start = scheme_end == std::string::npos
                                 ? config_.base_url.find('/')
                                 : config_.base_url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) {
        scheme_host_port_ = config_.base_url;
        path_prefix_ = "";
    } else {
        scheme_host_port_ = config_.base_url.substr(0, path_start);
        path_prefix_ = config_.base_url.substr(path_start);
    }
    while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
}

BackendExchange RemoteBackend::complete(const std::vector<Message>& messages) {
    if (messages.empty()) throw InvalidInputError("complete() requires at least one message");
    BackendExchange exchange;
    exchange.request = messages;
    exchange.fingerprint = knowflow::fingerprint(messages);

    ordered_json body;
    body["model"] = config_.model;
    body["messages"] = ordered_json::array();
    for (const auto& m : messages)
        body["messages"].push_back(ordered_json{{"role", to_string(m.role)}, {"content", m.content}});
    const std::string payload = body.dump();

    std::string last_error;
    const auto started = std::chrono::steady_clock::now();
    for (int attempt = 0; attempt <= config_.retries; ++attempt) {
        httplib::Client client(scheme_host_port_);
        client.set_connection_timeout(std::chrono::duration_cast<std::chrono::seconds>(config_.timeout).count(), 0);
        client.set_read_timeout(std::chrono::duration_cast<std::chrono::seconds>(config_.timeout).count(), 0);
        httplib::Headers headers{{"Authorization", "Bearer " + config_.api_key}};
        auto res = client.Post((path_prefix_ + "/chat/completions").c_str(), headers, payload,
                               "application/json");
        if (!res) {
            last_error = "transport error: " + httplib::to_string(res.error());
        } else if (res->status >= 500) {
            last_error = "server error: status " + std::to_string(res->status);
        } else if (res->status != 200) {
            throw BackendError("chat completion failed: status " + std::to_string(res->status) +
                               " " + res->body);
        } else {
            try {
                json doc = json::parse(res->body);
                exchange.response =
                    doc.at("choices").at(0).at("message").at("content").get<std::string>();
            } catch (const json::exception& e) {
                throw BackendError(std::string("malformed chat completion response: ") + e.what());
            }
            exchange.latency = std::chrono::duration_cast<std::chrono::milliseconds>(
                std::chrono::steady_clock::now() - started);
            return exchange;
        }
        if (attempt < config_.retries)
            std::this_thread::sleep_for(std::chrono::milliseconds(50 * (attempt + 1)));
    }
    throw BackendError("chat completion failed after " + std::to_string(config_.retries + 1) +
                       " attempts: " + last_error);
}

BackendDescriptor scripted_descriptor(const std::string& scenario_path) {
    BackendDescriptor d;
    d.kind = BackendDescriptor::Kind::scripted;
    d.scenario_path = scenario_path;
    return d;
}

BackendDescriptor remote_descriptor_from_env() {
    BackendDescriptor d;
    d.kind = BackendDescriptor::Kind::remote;
    const char* base = std::getenv("KNOWFLOW_API_BASE");
    const char* key = std::getenv("KNOWFLOW_API_KEY");
    const char* model = std::getenv("KNOWFLOW_MODEL");
    d.remote.base_url = base ? base : "";
    d.remote.api_key = key ? key : "";
    d.remote.model = model ? model : "gpt-4o-mini";
    return d;
}

std::shared_ptr<Backend> make_backend(const BackendDescriptor& descriptor) {
    switch (descriptor.kind) {
        case BackendDescriptor::Kind::scripted:
            return std::make_shared<ScriptedBackend>(load_scenario(descriptor.scenario_path));
        case BackendDescriptor::Kind::remote:
            return std::make_shared<RemoteBackend>(descriptor.remote);
    }
    throw Error("unknown backend kind");
}

} // namespace knowflow
