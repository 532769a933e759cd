#pragma once

#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "knowflow/backend.hpp"
#include "knowflow/errors.hpp"

namespace knowflow {

struct ToolCallRecord {
    std::string tool_name;
    std::string arguments;
    std::string result;
    bool ok = false;
};

/// Programmatic mock: (canonical arguments, per-instance call index) -> (result, ok).
using MockHandler = std::function<std::pair<std::string, bool>(const std::string&, int)>;

/// JSON arguments are dumped compactly with sorted keys so scenario keys and
/// backend-produced arguments compare equal regardless of formatting.
std::string canonical_args(const std::string& arguments);

/// Registry of executor tools. The registry itself is immutable configuration;
/// each node execution works against its own Instance so per-instance tool
/// state never leaks between concurrent executions.
class ToolRegistry {
public:
    enum class Kind { mock, http_stub, disabled };

    /// Every builtin tool name registered, disabled.
    ToolRegistry();

    /// (name, purpose) of the builtin executor tool set.
    static const std::vector<std::pair<std::string, std::string>>& builtin_tools();

    /// Mocks for every tool named in the scenario's tool entries, everything
    /// else disabled.
    static ToolRegistry from_scenario(const ScriptedScenario& scenario);

    void add_canned(const std::string& name, const std::string& args_key,
                    const std::string& result, bool ok = true);
    void set_handler(const std::string& name, MockHandler handler);
    void set_http_stub(const std::string& name, const std::string& url);
    void set_disabled(const std::string& name);

    bool registered(const std::string& name) const;
    Kind kind(const std::string& name) const; // availability report
    std::vector<std::string> names() const;

    class Instance {
    public:
        /// Runs the named tool. Unregistered names raise UnknownToolError;
        /// disabled tools answer ok=false with an availability message.
        ToolCallRecord invoke(const std::string& name, const std::string& arguments);
        int call_count(const std::string& name) const;

    private:
        friend class ToolRegistry;
        explicit Instance(const ToolRegistry* owner) : owner_(owner) {}
        const ToolRegistry* owner_;
        std::map<std::string, int> counts_;
    };

    Instance instantiate() const { return Instance(this); }

private:
    struct Spec {
        Kind kind = Kind::disabled;
        std::string purpose;
        std::map<std::string, std::pair<std::string, bool>> canned;
        MockHandler handler;
        std::string stub_url;
    };
    Spec& spec_for(const std::string& name);
    std::map<std::string, Spec> tools_;
};

} // namespace knowflow
