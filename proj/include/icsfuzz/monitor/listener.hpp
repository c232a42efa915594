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

// Edge stream client: reads edge records from a device's scope port on a
// background thread and hands validated edges to the campaign.

#include <atomic>
#include <mutex>
#include <thread>
#include <vector>

#include "icsfuzz/monitor/edges.hpp"
#include "icsfuzz/net/tcp.hpp"

namespace icsfuzz::monitor {

class TcpEdgeSource final : public net::EdgeSource {
public:
    /// Throws ConnectFailed when the scope port cannot be reached.
    explicit TcpEdgeSource(capture::Endpoint ep, Nanos connect_timeout = std::chrono::seconds(2)) : ep_(ep) {
        sock_ = net::tcp_connect(ep_, connect_timeout);
        thread_ = std::thread([this] { run(); });
    }

    ~TcpEdgeSource() override {
        stop_ = true;
        if (thread_.joinable()) thread_.join();
    }

    std::vector<Edge> poll(Nanos) override {
        std::lock_guard lock(mu_);
        std::vector<Edge> out;
        out.swap(ready_);
        return out;
    }

    std::size_t rejected() const {
        std::lock_guard lock(mu_);
        return ingest_.series().rejected();
    }

private:
    void run() {
        std::uint8_t buf[4096];
        while (!stop_) {
            if (!sock_.valid()) {
                // The device may be restarting; keep trying quietly.
                try {
                    sock_ = net::tcp_connect(ep_, std::chrono::milliseconds(200));
                } catch (const ConnectFailed&) {
                    std::this_thread::sleep_for(std::chrono::milliseconds(50));
                    continue;
                }
            }
            pollfd p{sock_.fd(), POLLIN, 0};
            if (::poll(&p, 1, 50) <= 0) continue;
            ssize_t n = ::recv(sock_.fd(), buf, sizeof buf, 0);
            if (n <= 0) {
                if (n < 0 && (errno == EAGAIN || errno == EINTR)) continue;
                sock_.reset();
                continue;
            }
            std::lock_guard lock(mu_);
            auto accepted = ingest_.feed(std::string_view(reinterpret_cast<const char*>(buf), static_cast<std::size_t>(n)));
            ready_.insert(ready_.end(), accepted.begin(), accepted.end());
        }
    }

    capture::Endpoint ep_;
    net::Socket sock_;
    std::thread thread_;
    std::atomic<bool> stop_{false};
    mutable std::mutex mu_;
    EdgeIngestor ingest_;
    std::vector<Edge> ready_;
};

}  // namespace icsfuzz::monitor
