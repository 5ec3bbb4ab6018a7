#pragma once

#include <stdexcept>
#include <string>

namespace tutorbench {

/// Base class for all domain errors raised by this library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---- quizset ----

class MalformedDocument : public Error {
 public:
  using Error::Error;
};

class MissingField : public Error {
 public:
  using Error::Error;
};

class DuplicateId : public Error {
 public:
  explicit DuplicateId(int id)
      : Error("duplicate quiz item id " + std::to_string(id)), id_(id) {}
  int id() const { return id_; }

 private:
  int id_;
};

class EmptyText : public Error {
 public:
  using Error::Error;
};

class UnknownField : public Error {
 public:
  using Error::Error;
};

// ---- prompting ----

class EmptyQuizSet : public Error {
 public:
  using Error::Error;
};

class DigestMismatch : public Error {
 public:
  using Error::Error;
};

class SelfComparison : public Error {
 public:
  using Error::Error;
};

class UnknownTemplateVersion : public Error {
 public:
  using Error::Error;
};

// ---- provider ----

class AuthError : public Error {
 public:
  using Error::Error;
};

class RateLimited : public Error {
 public:
  using Error::Error;
};

class TransportError : public Error {
 public:
  using Error::Error;
};

class EmptyResponse : public Error {
 public:
  using Error::Error;
};

class StoreCorrupt : public Error {
 public:
  using Error::Error;
};

/// Raised in replay mode when a request has no recorded transcript.
class ReplayMiss : public Error {
 public:
  using Error::Error;
};

// ---- arena ----

class PlanInvalid : public Error {
 public:
  using Error::Error;
};

class JudgeUnparseable : public Error {
 public:
  using Error::Error;
};

class AmbiguousVerdict : public Error {
 public:
  using Error::Error;
};

// ---- tally ----

class MixedDigests : public Error {
 public:
  using Error::Error;
};

// ---- btrank ----

class DisconnectedGraph : public Error {
 public:
  using Error::Error;
};

class DegenerateSeparation : public Error {
 public:
  using Error::Error;
};

class SingularBeyondNullSpace : public Error {
 public:
  using Error::Error;
};

// ---- report ----

class ModelSetMismatch : public Error {
 public:
  using Error::Error;
};

}  // namespace tutorbench
