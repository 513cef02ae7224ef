#include "ctikg/ioc.hpp"

#include <algorithm>
#include <fstream>

#include <nlohmann/json.hpp>

#include "ctikg/core.hpp"

namespace ctikg {

namespace {

// Patterns are matched against the whole surface (regex_match), so they need
// no ^...$ anchors. Order encodes precedence.
std::vector<IocClass> builtin_classes() {
    return {
        {"cve", R"(CVE-\d{4}-\d{4,7})"},
        {"url", R"((?:https?|hxxps?|ftp)://[^\s]+)"},
        {"email", R"([A-Za-z0-9._%+-]+@[A-Za-z0-9-]+(?:\.[A-Za-z0-9-]+)*\.[A-Za-z]{2,})"},
        {"ipv4", R"((?:(?:25[0-5]|2[0-4]\d|1\d\d|[1-9]?\d)\.){3}(?:25[0-5]|2[0-4]\d|1\d\d|[1-9]?\d))"},
        {"ipv6",
         R"((?:[0-9A-Fa-f]{1,4}:){7}[0-9A-Fa-f]{1,4}|(?:[0-9A-Fa-f]{1,4}:){1,7}:|(?:[0-9A-Fa-f]{1,4}:){1,6}:[0-9A-Fa-f]{1,4}|(?:[0-9A-Fa-f]{1,4}:){1,5}(?::[0-9A-Fa-f]{1,4}){1,2}|(?:[0-9A-Fa-f]{1,4}:){1,4}(?::[0-9A-Fa-f]{1,4}){1,3}|(?:[0-9A-Fa-f]{1,4}:){1,3}(?::[0-9A-Fa-f]{1,4}){1,4}|(?:[0-9A-Fa-f]{1,4}:){1,2}(?::[0-9A-Fa-f]{1,4}){1,5}|[0-9A-Fa-f]{1,4}:(?::[0-9A-Fa-f]{1,4}){1,6}|:(?::[0-9A-Fa-f]{1,4}){1,7}|::)"},
        {"sha256", R"([A-Fa-f0-9]{64})"},
        {"sha1", R"([A-Fa-f0-9]{40})"},
        {"md5", R"([A-Fa-f0-9]{32})"},
        {"domain", R"((?:[A-Za-z0-9](?:[A-Za-z0-9-]{0,61}[A-Za-z0-9])?\.)+[A-Za-z]{2,}\.?)"},
        {"registry_key", R"((?:HKEY_[A-Za-z_]+|HKLM|HKCU|HKCR|HKU|HKCC)\\[^\s]+)"},
        {"file_path", R"((?:[A-Za-z]:\\|\\\\)[^\s]+|/(?:[^/\s]+/)*[^/\s]+)"},
    };
}

bool case_folded_class(const std::string& name) {
    return name == "cve" || name == "md5" || name == "sha1" || name == "sha256" ||
           name == "domain";
}

} // namespace

IocMatcher::IocMatcher(std::vector<IocClass> classes) : classes_(std::move(classes)) {
    compiled_.reserve(classes_.size());
    for (const auto& c : classes_) {
        if (c.name.empty())
            throw SchemaError("ioc class with empty name");
        try {
            compiled_.emplace_back(c.pattern, std::regex::ECMAScript | std::regex::icase);
        } catch (const std::regex_error& e) {
            throw SchemaError("ioc class '" + c.name + "': bad pattern: " + e.what());
        }
    }
}

const IocMatcher& IocMatcher::builtin() {
    static const IocMatcher matcher{builtin_classes()};
    return matcher;
}

std::optional<std::string> IocMatcher::detect(const std::string& surface) const {
    const std::string s = normalize_ws(surface);
    if (s.empty())
        return std::nullopt;
    for (std::size_t i = 0; i < classes_.size(); ++i) {
        if (std::regex_match(s, compiled_[i]))
            return classes_[i].name;
    }
    return std::nullopt;
}

std::string IocMatcher::normalize(const std::string& surface, const std::string& ioc_class) const {
    std::string s = normalize_ws(surface);
    if (!case_folded_class(ioc_class))
        return s; // urls, paths, registry keys etc. stay verbatim
    s = to_lower(s);
    if (ioc_class == "domain") {
        while (!s.empty() && s.back() == '.')
            s.pop_back();
    }
    return s;
}

IocMatcher IocMatcher::load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw SchemaError("cannot open ioc pattern file: " + path);
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError("ioc pattern file " + path + ": " + e.what());
    }
    if (!doc.is_object() || !doc.contains("classes") || !doc["classes"].is_array())
        throw SchemaError("ioc pattern file " + path + ": expected {\"classes\": [...]}");
    std::vector<IocClass> classes;
    for (const auto& item : doc["classes"]) {
        if (!item.is_object() || !item.contains("name") || !item.contains("pattern"))
            throw SchemaError("ioc pattern file " + path + ": class needs name and pattern");
        classes.push_back({item["name"].get<std::string>(), item["pattern"].get<std::string>()});
    }
    return IocMatcher(std::move(classes));
}

std::optional<std::string> detect_ioc(const std::string& surface) {
    return IocMatcher::builtin().detect(surface);
}

std::string normalize_ioc(const std::string& surface, const std::string& ioc_class) {
    return IocMatcher::builtin().normalize(surface, ioc_class);
}

} // namespace ctikg
