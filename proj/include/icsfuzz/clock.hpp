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

#include <atomic>
#include <chrono>
#include <thread>

#include "icsfuzz/bytes.hpp"

namespace icsfuzz {

/// Time source shared by the sender, the device emulation and the monitor.
class Clock {
public:
    virtual ~Clock() = default;
    virtual Nanos now() const = 0;
    virtual void sleep_for(Nanos d) = 0;
    virtual bool is_virtual() const { return false; }
};

/// Wall clock; timestamps count from the Unix epoch.
class RealClock final : public Clock {
public:
    Nanos now() const override {
        return std::chrono::duration_cast<Nanos>(std::chrono::system_clock::now().time_since_epoch());
    }
    void sleep_for(Nanos d) override {
        if (d > Nanos(0)) std::this_thread::sleep_for(d);
    }
};

/// Manually advanced clock. Sleeping advances time instantly.
class VirtualClock final : public Clock {
public:
    explicit VirtualClock(Nanos start = Nanos(0)) : now_(start.count()) {}

    Nanos now() const override { return Nanos(now_.load()); }
    void sleep_for(Nanos d) override { advance(d); }
    bool is_virtual() const override { return true; }

    void advance(Nanos d) {
        if (d > Nanos(0)) now_.fetch_add(d.count());
    }
    void advance_to(Nanos t) {
        auto cur = now_.load();
        while (t.count() > cur && !now_.compare_exchange_weak(cur, t.count())) {
        }
    }

private:
    std::atomic<Nanos::rep> now_;
};

}  // namespace icsfuzz
