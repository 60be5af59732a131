#ifndef HESPLIT_UTIL_ERRORS_HPP
#define HESPLIT_UTIL_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace hesplit {

// Base class for all library errors so callers can catch broadly.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Ring/modulus/scale parameter problems.
struct ParamError : Error {
    using Error::Error;
};

// Multiplicative budget exhausted or operand levels/scales incompatible.
struct LevelError : Error {
    using Error::Error;
};

// Missing rotation/relinearization key or key-parameter mismatch.
struct KeyError : Error {
    using Error::Error;
};

// Shape mismatch in packed linear algebra or plaintext tensors.
struct DimensionError : Error {
    using Error::Error;
};

// Malformed bytes: ciphertext blobs, protocol frames, dataset files.
struct ParseError : Error {
    using Error::Error;
};

// Peer violated the protocol (bad handshake, sequence gap, flood).
struct ProtocolError : Error {
    using Error::Error;
};

// Mixing values produced by different backends, or wrong backend kind.
struct BackendError : Error {
    using Error::Error;
};

}  // namespace hesplit

#endif
