#include "adtrace/symbol.hpp"

#include <mutex>
#include <unordered_set>

namespace adtrace {
namespace {

struct Pool {
    std::mutex mutex;
    std::unordered_set<std::string> strings;
    const std::string* empty;

    Pool() { empty = &*strings.emplace().first; }

    const std::string* intern(std::string_view text) {
        if (text.empty()) return empty;
        std::lock_guard lock(mutex);
        // node-based set: element addresses survive rehashing
        return &*strings.emplace(text).first;
    }
};

Pool& pool() {
    static Pool instance;
    return instance;
}

} // namespace

Symbol::Symbol() noexcept : text_(pool().empty) {}

Symbol::Symbol(std::string_view text) : text_(pool().intern(text)) {}

std::size_t Symbol::pool_size() {
    auto& p = pool();
    std::lock_guard lock(p.mutex);
    return p.strings.size();
}

} // namespace adtrace
