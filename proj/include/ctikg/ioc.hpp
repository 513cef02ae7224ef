#pragma once
// Indicator-of-compromise detection. Mentions that parse as IOC literals
// (CVE ids, addresses, hashes, ...) are conceptually distinct even when
// semantically close, so the merger isolates them unless their normalized
// literals are identical.

#include <optional>
#include <regex>
#include <string>
#include <vector>

#include "ctikg/errors.hpp"

namespace ctikg {

struct IocClass {
    std::string name;    // cve, ipv4, ipv6, domain, url, email, md5, sha1, sha256,
                         // file_path, registry_key
    std::string pattern; // regular-expression source, matched against the full surface
};

class IocMatcher {
public:
    // Built-in pattern set in fixed precedence order:
    // cve > url > email > ipv4 > ipv6 > sha256 > sha1 > md5 > domain >
    // registry_key > file_path.
    static const IocMatcher& builtin();

    explicit IocMatcher(std::vector<IocClass> classes);

    // First matching class by precedence; nullopt if no pattern matches.
    std::optional<std::string> detect(const std::string& surface) const;

    // Literal used for IOC equality: case-folds hashes, domains and CVEs,
    // strips trailing dots from domains, leaves everything else verbatim.
    std::string normalize(const std::string& surface, const std::string& ioc_class) const;

    const std::vector<IocClass>& classes() const { return classes_; }

    // Loads a pattern file ({"classes": [{"name", "pattern"}, ...]}), kept in
    // file order. Deployments extend the set without code changes.
    static IocMatcher load_file(const std::string& path);

private:
    std::vector<IocClass> classes_;
    std::vector<std::regex> compiled_;
};

// Convenience wrappers over the builtin matcher.
std::optional<std::string> detect_ioc(const std::string& surface);
std::string normalize_ioc(const std::string& surface, const std::string& ioc_class);

} // namespace ctikg
