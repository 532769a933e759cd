#include "knowflow/tools.hpp"

#include <algorithm>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "knowflow/graph.hpp" // strip_trailing_commas

namespace knowflow {

using nlohmann::json;

std::string canonical_args(const std::string& arguments) {
    try {
        return json::parse(strip_trailing_commas(arguments)).dump();
    } catch (const json::parse_error&) {
        // Not JSON: trim and compare as-is.
        auto begin = arguments.find_first_not_of(" \t\r\n");
        if (begin == std::string::npos) return "";
        auto end = arguments.find_last_not_of(" \t\r\n");
        return arguments.substr(begin, end - begin + 1);
    }
}

const std::vector<std::pair<std::string, std::string>>& ToolRegistry::builtin_tools() {
    static const std::vector<std::pair<std::string, std::string>> tools = {
        {"search_google", "Search the web for the given query"},
        {"search_wiki", "Look up an entity on Wikipedia and return the page summary"},
        {"search_wiki_revision",
         "Fetch the latest Wikipedia revision at or before the end of the given (year, month)"},
        {"search_archived_webpage",
         "Fetch the Wayback Machine archive of a url for a given date"},
        {"extract_document_content", "Extract processed text from a local document"},
        {"extract_url_content", "Fetch a url and return the processed page text"},
        {"ask_question_about_image", "Answer a question about an image"},
        {"ask_question_about_audio", "Answer a question about an audio file"},
        {"ask_question_about_video", "Answer a question about a video"},
        {"download_media_from_url", "Download the media or document behind a url"},
        {"execute_code", "Execute a code snippet"},
        {"browse_url", "Drive a browser session through multi-step page interactions"},
        {"ocr2text", "Run OCR over an image and return the recognized text"},
    };
    return tools;
}

ToolRegistry::ToolRegistry() {
    for (const auto& [name, purpose] : builtin_tools()) {
        Spec spec;
        spec.kind = Kind::disabled;
        spec.purpose = purpose;
        tools_[name] = std::move(spec);
    }
}

ToolRegistry ToolRegistry::from_scenario(const ScriptedScenario& scenario) {
    ToolRegistry registry;
    for (const auto& entry : scenario.tools)
        registry.add_canned(entry.name, entry.args_key, entry.result, entry.ok);
    return registry;
}

ToolRegistry::Spec& ToolRegistry::spec_for(const std::string& name) {
    auto it = tools_.find(name);
    if (it == tools_.end()) {
        Spec spec;
        spec.purpose = "project-specific tool";
        it = tools_.emplace(name, std::move(spec)).first;
    }
    return it->second;
}

void ToolRegistry::add_canned(const std::string& name, const std::string& args_key,
                              const std::string& result, bool ok) {
    Spec& spec = spec_for(name);
    spec.kind = Kind::mock;
    spec.canned[canonical_args(args_key)] = {result, ok};
}

void ToolRegistry::set_handler(const std::string& name, MockHandler handler) {
    Spec& spec = spec_for(name);
    spec.kind = Kind::mock;
    spec.handler = std::move(handler);
}

void ToolRegistry::set_http_stub(const std::string& name, const std::string& url) {
    Spec& spec = spec_for(name);
    spec.kind = Kind::http_stub;
    spec.stub_url = url;
}

void ToolRegistry::set_disabled(const std::string& name) {
    spec_for(name).kind = Kind::disabled;
}

bool ToolRegistry::registered(const std::string& name) const {
    return tools_.count(name) > 0;
}

ToolRegistry::Kind ToolRegistry::kind(const std::string& name) const {
    auto it = tools_.find(name);
    if (it == tools_.end()) throw UnknownToolError("unknown tool \"" + name + "\"");
    return it->second.kind;
}

std::vector<std::string> ToolRegistry::names() const {
    std::vector<std::string> out;
    for (const auto& [name, _] : tools_) out.push_back(name);
    std::sort(out.begin(), out.end());
    return out;
}

ToolCallRecord ToolRegistry::Instance::invoke(const std::string& name,
                                              const std::string& arguments) {
    auto it = owner_->tools_.find(name);
    if (it == owner_->tools_.end())
        throw UnknownToolError("unknown tool \"" + name + "\"");
    const auto& spec = it->second;

    ToolCallRecord record;
    record.tool_name = name;
    record.arguments = canonical_args(arguments);
    const int call_index = counts_[name]++;

    switch (spec.kind) {
        case Kind::disabled:
            record.ok = false;
            record.result = "tool \"" + name + "\" is unavailable in this configuration";
            break;
        case Kind::mock: {
            if (spec.handler) {
                auto [result, ok] = spec.handler(record.arguments, call_index);
                record.result = std::move(result);
                record.ok = ok;
            } else {
                auto hit = spec.canned.find(record.arguments);
                if (hit == spec.canned.end()) {
                    record.ok = false;
                    record.result = "no scripted result for tool \"" + name +
                                    "\" with arguments " + record.arguments;
                } else {
                    record.result = hit->second.first;
                    record.ok = hit->second.second;
                }
            }
            break;
        }
        case Kind::http_stub: {
            auto path_start = spec.stub_url.find('/', spec.stub_url.find("://") + 3);
            std::string host = path_start == std::string::npos ? spec.stub_url
                                                               : spec.stub_url.substr(0, path_start);
            std::string path = path_start == std::string::npos ? "/"
                                                               : spec.stub_url.substr(path_start);
            httplib::Client client(host);
            auto res = client.Post(path.c_str(), record.arguments, "application/json");
            if (!res) {
                record.ok = false;
                record.result = "stub call failed: " + httplib::to_string(res.error());
            } else {
                record.ok = res->status == 200;
                record.result = res->body;
            }
            break;
        }
    }
    return record;
}

int ToolRegistry::Instance::call_count(const std::string& name) const {
    auto it = counts_.find(name);
    return it == counts_.end() ? 0 : it->second;
}

} // namespace knowflow
