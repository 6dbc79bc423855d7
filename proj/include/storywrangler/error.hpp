#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace storywrangler {

/// Requested cell, language or partition does not exist.
class NotFoundError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A specific daily cell needed by an analysis is missing.
class MissingCellError : public NotFoundError {
public:
    explicit MissingCellError(std::string cell)
        : NotFoundError("missing cell " + cell), cell_(std::move(cell)) {}
    /// "{lang}/{n}gram/{YYYY-MM-DD}"
    const std::string& cell() const noexcept { return cell_; }

private:
    std::string cell_;
};

/// A stored file failed validation (bad checksum, malformed row, broken invariant).
class IntegrityError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Attempt to write a cell that already exists without overwrite.
class AlreadyExistsError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Input record could not be parsed or violates a record invariant.
class ParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace storywrangler
