#pragma once

#include <stdexcept>
#include <string>

namespace dtnsim {

// Root of every exception the library throws on purpose.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input outside a function's mathematical domain (negative range, zero bandwidth...).
class DomainError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class CryptoError : public Error {
 public:
  using Error::Error;
};

// Signature, hash or padding check failed.
class IntegrityError : public Error {
 public:
  using Error::Error;
};

class NoRouteError : public Error {
 public:
  using Error::Error;
};

class ProtocolError : public Error {
 public:
  using Error::Error;
};

class NotFoundError : public Error {
 public:
  using Error::Error;
};

class ConflictError : public Error {
 public:
  using Error::Error;
};

class StorageError : public Error {
 public:
  using Error::Error;
};

class NetworkError : public Error {
 public:
  using Error::Error;
};

}  // namespace dtnsim
