#include "plurihop/ledger.hpp"

namespace plurihop {

void Ledger::add(const std::string& key, std::int64_t amount) {
    std::lock_guard lock(mutex_);
    counters_[key] += amount;
}

std::int64_t Ledger::get(const std::string& key) const {
    std::lock_guard lock(mutex_);
    auto it = counters_.find(key);
    return it == counters_.end() ? 0 : it->second;
}

std::map<std::string, std::int64_t> Ledger::snapshot() const {
    std::lock_guard lock(mutex_);
    return counters_;
}

void Ledger::merge(const Ledger& other) {
    if (&other == this) return;
    auto theirs = other.snapshot();
    std::lock_guard lock(mutex_);
    for (const auto& [k, v] : theirs) counters_[k] += v;
}

nlohmann::json Ledger::to_json() const {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [k, v] : snapshot()) j[k] = v;
    return j;
}

}  // namespace plurihop
