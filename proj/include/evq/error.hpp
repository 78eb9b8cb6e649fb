#pragma once

#include <sstream>
#include <stdexcept>
#include <string>

namespace evq {

// Error thrown by every evq operation that can fail. The message always
// carries enough context (file, line number, ticker, event id) to act on.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

template <class... Parts>
[[noreturn]] void fail(Parts&&... parts) {
    std::ostringstream os;
    (os << ... << parts);
    throw Error(os.str());
}

template <class... Parts>
void require(bool cond, Parts&&... parts) {
    if (!cond) fail(std::forward<Parts>(parts)...);
}

} // namespace evq
