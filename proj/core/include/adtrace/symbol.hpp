#pragma once

#include <compare>
#include <cstddef>
#include <functional>
#include <string>
#include <string_view>

namespace adtrace {

/// Interned, immutable string handle.
///
/// Host names, principals, image paths and ticket ids repeat millions of times
/// in a realistic log; a Symbol is one pointer wide and compares by identity.
/// Ordering compares the underlying text so sorted output stays deterministic.
/// The intern pool is process-global and never shrinks; interning is
/// thread-safe and reading a Symbol never takes a lock.
class Symbol {
public:
    Symbol() noexcept;
    explicit Symbol(std::string_view text);

    const std::string& str() const noexcept { return *text_; }
    std::string_view view() const noexcept { return *text_; }
    bool empty() const noexcept { return text_->empty(); }

    friend bool operator==(Symbol a, Symbol b) noexcept { return a.text_ == b.text_; }
    friend std::strong_ordering operator<=>(Symbol a, Symbol b) noexcept {
        if (a.text_ == b.text_) return std::strong_ordering::equal;
        return a.text_->compare(*b.text_) < 0 ? std::strong_ordering::less
                                                : std::strong_ordering::greater;
    }

    std::size_t hash() const noexcept { return std::hash<const void*>{}(text_); }

    /// Number of distinct strings interned so far.
    static std::size_t pool_size();

private:
    const std::string* text_;
};

} // namespace adtrace

template <>
struct std::hash<adtrace::Symbol> {
    std::size_t operator()(adtrace::Symbol s) const noexcept { return s.hash(); }
};
