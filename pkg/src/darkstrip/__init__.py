"""darkstrip: remove dark patterns from Android apps with community patches.

The toolkit edits APK files directly at the binary level: it parses the
ZIP container, rewrites binary layout XML, applies wildcard byte masks to
DEX bytecode, and re-signs the result with a user-generated certificate.
Patches are declarative, auditable documents that can carry reviewer
signatures checked against a trust store.
"""

__version__ = "0.1.0"
