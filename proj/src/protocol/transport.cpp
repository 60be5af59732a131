#include "hesplit/protocol/transport.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <condition_variable>
#include <cstring>
#include <deque>
#include <mutex>

#include "hesplit/util/errors.hpp"

namespace hesplit {

namespace {

// One direction of the in-process pipe.
struct PipeChannel {
    std::mutex mu;
    std::condition_variable cv;
    std::deque<std::vector<uint8_t>> queue;
    bool closed = false;

    void push(std::vector<uint8_t> bytes) {
        std::lock_guard<std::mutex> lock(mu);
        queue.push_back(std::move(bytes));
        cv.notify_one();
    }
    std::vector<uint8_t> pop() {
        std::unique_lock<std::mutex> lock(mu);
        cv.wait(lock, [&] { return !queue.empty() || closed; });
        if (queue.empty()) throw ProtocolError("pipe transport: peer closed");
        auto out = std::move(queue.front());
        queue.pop_front();
        return out;
    }
    void close() {
        std::lock_guard<std::mutex> lock(mu);
        closed = true;
        cv.notify_all();
    }
};

class PipeTransport : public Transport {
public:
    PipeTransport(std::shared_ptr<PipeChannel> out, std::shared_ptr<PipeChannel> in)
        : out_(std::move(out)), in_(std::move(in)) {}
    ~PipeTransport() override { out_->close(); }

    void send(const Frame& f) override {
        auto bytes = encode_frame(f);
        sent_ += bytes.size();
        out_->push(std::move(bytes));
    }
    Frame recv() override {
        const auto bytes = in_->pop();
        received_ += bytes.size();
        return decode_frame(bytes);
    }
    uint64_t bytes_sent() const override { return sent_; }
    uint64_t bytes_received() const override { return received_; }

private:
    std::shared_ptr<PipeChannel> out_, in_;
    uint64_t sent_ = 0, received_ = 0;
};

class TcpTransport : public Transport {
public:
    explicit TcpTransport(int fd) : fd_(fd) {
        const int one = 1;
        setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
    }
    ~TcpTransport() override {
        if (fd_ >= 0) ::close(fd_);
    }

    void send(const Frame& f) override {
        const auto bytes = encode_frame(f);
        write_all(bytes.data(), bytes.size());
        sent_ += bytes.size();
    }

    Frame recv() override {
        uint8_t header[kFrameHeaderSize];
        read_all(header, sizeof(header));
        uint32_t len = 0;
        std::memcpy(&len, header, 4);
        std::vector<uint8_t> bytes(kFrameHeaderSize + len);
        std::memcpy(bytes.data(), header, sizeof(header));
        read_all(bytes.data() + sizeof(header), len);
        received_ += bytes.size();
        return decode_frame(bytes);
    }

    uint64_t bytes_sent() const override { return sent_; }
    uint64_t bytes_received() const override { return received_; }

private:
    void write_all(const uint8_t* p, std::size_t n) {
        while (n > 0) {
            const ssize_t w = ::write(fd_, p, n);
            if (w <= 0) throw ProtocolError("tcp transport: write failed");
            p += w;
            n -= static_cast<std::size_t>(w);
        }
    }
    void read_all(uint8_t* p, std::size_t n) {
        while (n > 0) {
            const ssize_t r = ::read(fd_, p, n);
            if (r <= 0) throw ProtocolError("tcp transport: connection closed");
            p += r;
            n -= static_cast<std::size_t>(r);
        }
    }

    int fd_ = -1;
    uint64_t sent_ = 0, received_ = 0;
};

}  // namespace

std::pair<std::unique_ptr<Transport>, std::unique_ptr<Transport>> make_pipe_pair() {
    auto a_to_b = std::make_shared<PipeChannel>();
    auto b_to_a = std::make_shared<PipeChannel>();
    return {std::make_unique<PipeTransport>(a_to_b, b_to_a),
            std::make_unique<PipeTransport>(b_to_a, a_to_b)};
}

std::unique_ptr<Transport> tcp_listen(const std::string& address, int port) {
    const int listener = ::socket(AF_INET, SOCK_STREAM, 0);
    if (listener < 0) throw ProtocolError("tcp: socket() failed");
    const int one = 1;
    setsockopt(listener, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(static_cast<uint16_t>(port));
    if (address.empty() || address == "0.0.0.0") {
        addr.sin_addr.s_addr = INADDR_ANY;
    } else if (inet_pton(AF_INET, address.c_str(), &addr.sin_addr) != 1) {
        ::close(listener);
        throw ProtocolError("tcp: bad listen address " + address);
    }
    if (bind(listener, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0 ||
        listen(listener, 1) != 0) {
        ::close(listener);
        throw ProtocolError("tcp: cannot listen on " + address + ":" + std::to_string(port));
    }
    const int fd = accept(listener, nullptr, nullptr);
    ::close(listener);
    if (fd < 0) throw ProtocolError("tcp: accept failed");
    return std::make_unique<TcpTransport>(fd);
}

std::unique_ptr<Transport> tcp_connect(const std::string& address, int port) {
    const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) throw ProtocolError("tcp: socket() failed");
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(static_cast<uint16_t>(port));
    if (inet_pton(AF_INET, address.c_str(), &addr.sin_addr) != 1) {
        ::close(fd);
        throw ProtocolError("tcp: bad connect address " + address);
    }
    for (int attempt = 0; attempt < 50; ++attempt) {
        if (connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) == 0) {
            return std::make_unique<TcpTransport>(fd);
        }
        usleep(100000);
    }
    ::close(fd);
    throw ProtocolError("tcp: cannot connect to " + address + ":" + std::to_string(port));
}

}  // namespace hesplit
