// Copyright 2026 The icsfuzz Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace icsfuzz {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// capture

class MalformedCapture : public Error {
public:
    MalformedCapture(const std::string& what, std::size_t offset)
        : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}
    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

class UnsupportedLinkType : public Error {
public:
    explicit UnsupportedLinkType(unsigned link_type)
        : Error("unsupported link type " + std::to_string(link_type) + " (only Ethernet is supported)"),
          link_type_(link_type) {}
    unsigned link_type() const noexcept { return link_type_; }

private:
    unsigned link_type_;
};

class FramingViolation : public Error {
public:
    using Error::Error;
};

// inference

class StructureMismatch : public Error {
public:
    StructureMismatch(const std::string& what, std::size_t step) : Error(what), step_(step) {}
    std::size_t step() const noexcept { return step_; }

private:
    std::size_t step_;
};

// fuzz

class ConnectFailed : public Error {
public:
    using Error::Error;
};

class HandshakeStepTimeout : public Error {
public:
    explicit HandshakeStepTimeout(std::size_t step)
        : Error("handshake step " + std::to_string(step) + " timed out"), step_(step) {}
    std::size_t step() const noexcept { return step_; }

private:
    std::size_t step_;
};

class HandshakeShapeMismatch : public Error {
public:
    HandshakeShapeMismatch(const std::string& what, std::size_t step) : Error(what), step_(step) {}
    std::size_t step() const noexcept { return step_; }

private:
    std::size_t step_;
};

class PreconditionViolation : public Error {
public:
    using Error::Error;
};

class AbortedTargetUnreachable : public Error {
public:
    using Error::Error;
};

// monitor

class InsufficientData : public Error {
public:
    using Error::Error;
};

// report

class TargetUnreachable : public Error {
public:
    using Error::Error;
};

// configuration files and CLI options

class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace icsfuzz
