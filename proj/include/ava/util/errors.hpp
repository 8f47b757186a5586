// Copyright 2026 The ava-nvs Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace ava::util {

// Caller passed something outside an operation's input domain. Maps to CLI exit code 2.
class InputError : public std::runtime_error {
public:
    explicit InputError(const std::string& what) : std::runtime_error(what) {}
};

// Filesystem / OS level failure. Maps to CLI exit code 3.
class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

// Structurally invalid on-disk data (manifest, checkpoint). Carries field context.
class FormatError : public InputError {
public:
    explicit FormatError(const std::string& what) : InputError(what) {}
};

}  // namespace ava::util
