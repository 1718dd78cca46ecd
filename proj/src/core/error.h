#pragma once
#include <stdexcept>
#include <string>

namespace ms {

// error kinds map 1:1 onto CLI exit codes
enum class ErrKind {
    validation = 2,  // bad arguments, shapes, config
    io         = 3,  // filesystem / serialization
    data       = 4,  // dataset contents, formats, insufficient data
    numeric    = 5,  // non-finite values mid-computation
};

struct Error : std::runtime_error {
    ErrKind kind;
    Error(ErrKind k, const std::string& msg) : std::runtime_error(msg), kind(k) {}
};

[[noreturn]] inline void fail_validation(const std::string& m) { throw Error(ErrKind::validation, m); }
[[noreturn]] inline void fail_io(const std::string& m)         { throw Error(ErrKind::io, m); }
[[noreturn]] inline void fail_data(const std::string& m)       { throw Error(ErrKind::data, m); }
[[noreturn]] inline void fail_numeric(const std::string& m)    { throw Error(ErrKind::numeric, m); }

inline void check(bool cond, ErrKind k, const std::string& m) {
    if (!cond) throw Error(k, m);
}

}  // namespace ms
