#pragma once

#include "glhm/errors.hpp"

#include <map>
#include <string>
#include <vector>

namespace glhm {

//! Flat key = value run configuration. Every key has a default; unknown keys are rejected.
class RunConfig {
public:
    RunConfig();

    //! Parses "key = value" lines; '#' starts a comment. Throws ConfigError.
    static RunConfig parse(const std::string& text);
    static RunConfig load(const std::string& path);
    //! All keys in sorted order, one per line.
    std::string emit() const;

    bool has(const std::string& key) const { return values_.count(key) != 0; }
    void set(const std::string& key, const std::string& value);
    const std::string& get(const std::string& key) const;
    double number(const std::string& key) const;
    int integer(const std::string& key) const;
    //! Whitespace- or comma-separated numbers.
    std::vector<double> list(const std::string& key) const;

    static const std::map<std::string, std::string>& defaults();

    bool operator==(const RunConfig& o) const { return values_ == o.values_; }

private:
    std::map<std::string, std::string> values_;
};

} // namespace glhm
