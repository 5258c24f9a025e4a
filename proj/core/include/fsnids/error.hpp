#pragma once

#include <stdexcept>
#include <string>

namespace fsnids {

// Base for every error raised by the library. Callers that only need to
// report a failure can catch this; the subclasses exist so the CLI and tests
// can tell the failure classes apart.
class error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class config_error : public error {
public:
    using error::error;
};

class parse_error : public error {
public:
    using error::error;
};

class precondition_error : public error {
public:
    using error::error;
};

class value_domain_error : public error {
public:
    using error::error;
};

class index_error : public error {
public:
    using error::error;
};

class numerical_fault : public error {
public:
    using error::error;
};

class incompatibility_error : public error {
public:
    using error::error;
};

class corruption_error : public error {
public:
    using error::error;
};

}  // namespace fsnids
