#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <string>

#include <json.hpp>

namespace plurihop {

/// Thread-safe named counters recording provider calls, token usage and
/// pipeline events for a run.
class Ledger {
public:
    void add(const std::string& key, std::int64_t amount = 1);
    std::int64_t get(const std::string& key) const;
    std::map<std::string, std::int64_t> snapshot() const;
    void merge(const Ledger& other);
    nlohmann::json to_json() const;

private:
    mutable std::mutex mutex_;
    std::map<std::string, std::int64_t> counters_;
};

}  // namespace plurihop
