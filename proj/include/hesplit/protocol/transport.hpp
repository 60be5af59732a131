#ifndef HESPLIT_PROTOCOL_TRANSPORT_HPP
#define HESPLIT_PROTOCOL_TRANSPORT_HPP

#include <memory>
#include <string>

#include "hesplit/protocol/framing.hpp"

namespace hesplit {

// Duplex lock-step byte stream carrying frames. One writer and one reader per
// side; no concurrent in-flight batches.
class Transport {
public:
    virtual ~Transport() = default;
    virtual void send(const Frame& f) = 0;
    virtual Frame recv() = 0;
    virtual uint64_t bytes_sent() const = 0;
    virtual uint64_t bytes_received() const = 0;
};

// In-process pipe pair for --local runs and tests.
std::pair<std::unique_ptr<Transport>, std::unique_ptr<Transport>> make_pipe_pair();

// TCP: server side binds and accepts one peer; client side connects.
std::unique_ptr<Transport> tcp_listen(const std::string& address, int port);
std::unique_ptr<Transport> tcp_connect(const std::string& address, int port);

}  // namespace hesplit

#endif
