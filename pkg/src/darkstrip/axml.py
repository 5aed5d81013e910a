"""Parse, query, edit, and re-serialize Android binary XML.

Binary XML (the compiled form of manifests and layout files inside an
APK) is a sequence of chunks: a string pool, an optional resource map
tying the first pool entries to attribute resource ids, then namespace
and element chunks forming the document tree. This module edits that
encoding directly, without decompiling the app or round-tripping through
textual XML.

Two guarantees shape the design:

* Serializing an unmodified document reproduces the input byte for byte.
  Parsed string-pool and resource-map chunks keep their raw bytes and are
  re-emitted verbatim until an edit touches them.
* The string pool is append-only. Edits never renumber existing indices,
  so untouched chunks and attributes stay valid. New attribute names that
  need a resource id are appended to the pool and the resource map is
  zero-padded up to them (a zero id means "no id", matching how lookups
  treat short maps).

Unknown chunk types are preserved opaquely in document order; real APKs
contain tooling-specific chunks that must survive a rewrite.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

RES_STRING_POOL_TYPE = 0x0001
RES_XML_TYPE = 0x0003
RES_XML_RESOURCE_MAP_TYPE = 0x0180
RES_XML_START_NAMESPACE_TYPE = 0x0100
RES_XML_END_NAMESPACE_TYPE = 0x0101
RES_XML_START_ELEMENT_TYPE = 0x0102
RES_XML_END_ELEMENT_TYPE = 0x0103
RES_XML_CDATA_TYPE = 0x0104

UTF8_FLAG = 0x100
NO_INDEX = 0xFFFFFFFF

TYPE_REFERENCE = 0x01
TYPE_STRING = 0x03
TYPE_INT_DEC = 0x10
TYPE_INT_HEX = 0x11
TYPE_INT_BOOLEAN = 0x12
TYPE_FIRST_COLOR = 0x1C
TYPE_LAST_COLOR = 0x1F

ANDROID_NS_URI = "http://schemas.android.com/apk/res/android"

# Attribute resource ids from the platform's public android.R.attr space.
ATTR_NAME = 0x01010003
ATTR_ID = 0x010100D0
ATTR_VISIBILITY = 0x010100DC
ATTR_LAYOUT_WIDTH = 0x010100F4
ATTR_LAYOUT_HEIGHT = 0x010100F5
ATTR_TEXT = 0x0101014F
ATTR_VERSION_CODE = 0x0101021B
ATTR_VERSION_NAME = 0x0101021C

VISIBILITY_GONE = 2


class AxmlError(Exception):
    """Base class for binary XML errors."""


class TruncatedChunk(AxmlError):
    """Chunk runs past the input or has an impossible size."""


class BadStringPool(AxmlError):
    """String pool is malformed or an index points outside it."""


class DanglingEndTag(AxmlError):
    """End tag without a matching open element (or broken nesting)."""


class CannotRemoveRoot(AxmlError):
    """The document root cannot be removed."""


@dataclass(eq=True)
class TypedValue:
    """A Res_value payload: one byte of type, four bytes of data."""

    type_code: int
    data: int

    @classmethod
    def reference(cls, resource_id: int) -> "TypedValue":
        return cls(TYPE_REFERENCE, resource_id)

    @classmethod
    def int_dec(cls, value: int) -> "TypedValue":
        return cls(TYPE_INT_DEC, value & 0xFFFFFFFF)

    @classmethod
    def boolean(cls, value: bool) -> "TypedValue":
        return cls(TYPE_INT_BOOLEAN, 0xFFFFFFFF if value else 0)


@dataclass(eq=True)
class AttributeValue:
    ns_idx: int
    name_idx: int
    raw_idx: int
    type_code: int
    data: int


@dataclass(eq=True)
class ElementNode:
    ns_idx: int
    name_idx: int
    line: int
    attributes: list[AttributeValue] = field(default_factory=list)
    children: list = field(default_factory=list)
    comment_idx: int = NO_INDEX
    end_line: int = 0
    end_comment_idx: int = NO_INDEX
    id_index: int = 0
    class_index: int = 0
    style_index: int = 0
    parent: "ElementNode | None" = field(default=None, compare=False, repr=False)


@dataclass(eq=True)
class CDataNode:
    data_idx: int
    line: int
    comment_idx: int = NO_INDEX
    type_code: int = TYPE_STRING
    data: int = 0


@dataclass(eq=True)
class RawChunk:
    """Verbatim bytes of a chunk this module does not interpret."""

    blob: bytes


@dataclass(eq=True)
class ResourceMapMarker:
    """Placeholder keeping the resource map's position in the chunk stream."""


@dataclass(eq=True)
class NamespaceEvent:
    is_start: bool
    prefix_idx: int
    uri_idx: int
    line: int
    comment_idx: int = NO_INDEX


@dataclass(eq=True)
class StringPool:
    strings: list[str] = field(default_factory=list)
    flags: int = 0
    raw_chunk: bytes | None = field(default=None, compare=False, repr=False)
    styles_frozen: bool = False

    @property
    def utf8(self) -> bool:
        return bool(self.flags & UTF8_FLAG)

    def intern(self, text: str) -> int:
        """Index of ``text``, appending it when absent. Never renumbers."""
        try:
            return self.strings.index(text)
        except ValueError:
            if self.styles_frozen:
                raise BadStringPool("cannot append to a string pool that carries style data") from None
            self.strings.append(text)
            self.raw_chunk = None
            return len(self.strings) - 1


@dataclass(eq=True)
class AxmlDocument:
    pool: StringPool = field(default_factory=StringPool)
    resource_map: list[int] = field(default_factory=list)
    has_resource_map: bool = False
    resource_map_raw: bytes | None = field(default=None, compare=False, repr=False)
    pre_root: list = field(default_factory=list)
    root: ElementNode | None = None
    post_root: list = field(default_factory=list)

    def string(self, idx: int) -> str | None:
        if idx == NO_INDEX:
            return None
        return self.pool.strings[idx]

    def resource_id_of(self, string_idx: int) -> int | None:
        if 0 <= string_idx < len(self.resource_map) and self.resource_map[string_idx] != 0:
            return self.resource_map[string_idx]
        return None

    def element_name(self, node: ElementNode) -> str:
        return self.pool.strings[node.name_idx]

    def iter_elements(self):
        """Depth-first pre-order over the element tree."""
        if self.root is None:
            return
        stack = [self.root]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(reversed([c for c in node.children if isinstance(c, ElementNode)]))

    def count_elements(self) -> int:
        return sum(1 for _ in self.iter_elements())


@dataclass(frozen=True)
class AttrConstraint:
    """Match one attribute by name or resource id, optionally by value.

    ``expected`` is a TypedValue, a plain string (compared against the
    attribute's string or raw value), or None for a bare presence check.
    """

    name: str | None = None
    resource_id: int | None = None
    expected: object = None

    def __post_init__(self) -> None:
        if self.name is None and self.resource_id is None:
            raise ValueError("attribute constraint needs a name or a resource id")


@dataclass(frozen=True)
class Selector:
    """Locates elements: by tag name, attribute constraints, or ancestry.

    ``path`` names the element's nearest ancestors, outermost first and
    direct parent last; it must match the tail of the real ancestor
    chain. At least one of the three fields must be present.
    """

    element_name: str | None = None
    attrs: tuple[AttrConstraint, ...] = ()
    path: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        if self.element_name is None and not self.attrs and not self.path:
            raise ValueError("selector needs at least one constraint")


@dataclass(frozen=True)
class AttrSpec:
    """Names an attribute for set_attribute: namespace URI, name, and id."""

    name: str
    ns_uri: str | None = None
    resource_id: int | None = None


# ---------------------------------------------------------------------------
# parsing


def parse_axml(data: bytes) -> AxmlDocument:
    """Parse binary XML bytes into a document tree.

    Arbitrary input is safe: malformed bytes raise TruncatedChunk,
    BadStringPool, or DanglingEndTag, never an out-of-bounds access.
    """
    if len(data) < 8:
        raise TruncatedChunk("input shorter than a chunk header")
    doc_type, header_size = struct.unpack_from("<HH", data, 0)
    doc_size = struct.unpack_from("<I", data, 4)[0]
    if doc_type != RES_XML_TYPE:
        raise TruncatedChunk(f"first chunk is 0x{doc_type:04X}, not a binary XML document")
    if header_size < 8 or doc_size != len(data):
        raise TruncatedChunk("document size field disagrees with input length")

    doc = AxmlDocument()
    stack: list[ElementNode] = []
    pos = header_size
    saw_pool = False
    while pos < doc_size:
        if doc_size - pos < 8:
            raise TruncatedChunk("trailing bytes smaller than a chunk header")
        ctype, chsize = struct.unpack_from("<HH", data, pos)
        csize = struct.unpack_from("<I", data, pos + 4)[0]
        if csize < 8 or chsize < 8 or csize < chsize or pos + csize > doc_size:
            raise TruncatedChunk(f"chunk 0x{ctype:04X} at {pos} has impossible size {csize}")
        chunk = data[pos : pos + csize]
        if ctype == RES_STRING_POOL_TYPE and not saw_pool:
            doc.pool = _parse_string_pool(chunk, chsize)
            saw_pool = True
        elif ctype == RES_XML_RESOURCE_MAP_TYPE and not doc.has_resource_map and not stack and doc.root is None:
            count = (csize - chsize) // 4
            doc.resource_map = list(struct.unpack_from(f"<{count}I", chunk, chsize))
            doc.resource_map_raw = chunk
            doc.has_resource_map = True
            doc.pre_root.append(ResourceMapMarker())
        elif ctype in (RES_XML_START_NAMESPACE_TYPE, RES_XML_END_NAMESPACE_TYPE):
            if stack:
                stack[-1].children.append(RawChunk(chunk))
            else:
                event = _parse_namespace(chunk, ctype == RES_XML_START_NAMESPACE_TYPE)
                (doc.pre_root if doc.root is None else doc.post_root).append(event)
        elif ctype == RES_XML_START_ELEMENT_TYPE:
            node = _parse_start_element(chunk, chsize)
            if stack:
                node.parent = stack[-1]
                stack[-1].children.append(node)
            elif doc.root is None:
                doc.root = node
            else:
                raise DanglingEndTag("second root element")
            stack.append(node)
        elif ctype == RES_XML_END_ELEMENT_TYPE:
            if not stack:
                raise DanglingEndTag("end tag with no open element")
            line, comment, ns_idx, name_idx = _parse_node_ext(chunk, chsize, 8)
            node = stack.pop()
            if name_idx != node.name_idx or ns_idx != node.ns_idx:
                raise DanglingEndTag("end tag does not match open element")
            node.end_line = line
            node.end_comment_idx = comment
        elif ctype == RES_XML_CDATA_TYPE:
            cdata = _parse_cdata(chunk, chsize)
            if stack:
                stack[-1].children.append(cdata)
            else:
                (doc.pre_root if doc.root is None else doc.post_root).append(RawChunk(chunk))
        else:
            blob = RawChunk(chunk)
            if stack:
                stack[-1].children.append(blob)
            else:
                (doc.pre_root if doc.root is None else doc.post_root).append(blob)
        pos += csize
    if stack:
        raise TruncatedChunk(f"document ended with {len(stack)} unclosed element(s)")
    if doc.root is None:
        raise TruncatedChunk("document has no root element")
    _check_indices(doc)
    return doc


def _parse_string_pool(chunk: bytes, header_size: int) -> StringPool:
    if header_size < 28 or len(chunk) < 28:
        raise BadStringPool("string pool header too small")
    count, style_count, flags, strings_start, styles_start = struct.unpack_from("<IIIII", chunk, 8)
    need = header_size + 4 * (count + style_count)
    if need > len(chunk) or strings_start > len(chunk):
        raise BadStringPool("string pool offsets run past the chunk")
    offsets = struct.unpack_from(f"<{count}I", chunk, header_size)
    utf8 = bool(flags & UTF8_FLAG)
    data_end = styles_start if style_count and styles_start else len(chunk)
    strings = []
    for off in offsets:
        strings.append(_decode_pool_string(chunk, strings_start + off, data_end, utf8))
    return StringPool(strings=strings, flags=flags, raw_chunk=chunk, styles_frozen=style_count > 0)


def _decode_pool_string(chunk: bytes, at: int, end: int, utf8: bool) -> str:
    if utf8:
        if at + 2 > end:
            raise BadStringPool("UTF-8 string header out of bounds")
        _u16len, consumed = _read_len8(chunk, at, end)
        blen, consumed2 = _read_len8(chunk, at + consumed, end)
        start = at + consumed + consumed2
        if start + blen > end:
            raise BadStringPool("UTF-8 string data out of bounds")
        try:
            return chunk[start : start + blen].decode("utf-8")
        except UnicodeDecodeError as exc:
            raise BadStringPool(f"bad UTF-8 string data: {exc}") from exc
    if at + 2 > end:
        raise BadStringPool("UTF-16 string header out of bounds")
    clen = struct.unpack_from("<H", chunk, at)[0]
    at += 2
    if clen & 0x8000:
        if at + 2 > end:
            raise BadStringPool("UTF-16 extended length out of bounds")
        clen = ((clen & 0x7FFF) << 16) | struct.unpack_from("<H", chunk, at)[0]
        at += 2
    if at + 2 * clen > end:
        raise BadStringPool("UTF-16 string data out of bounds")
    try:
        return chunk[at : at + 2 * clen].decode("utf-16-le")
    except UnicodeDecodeError as exc:
        raise BadStringPool(f"bad UTF-16 string data: {exc}") from exc


def _read_len8(chunk: bytes, at: int, end: int) -> tuple[int, int]:
    if at >= end:
        raise BadStringPool("string length byte out of bounds")
    first = chunk[at]
    if first & 0x80:
        if at + 1 >= end:
            raise BadStringPool("extended string length out of bounds")
        return ((first & 0x7F) << 8) | chunk[at + 1], 2
    return first, 1


def _parse_node_header(chunk: bytes, header_size: int) -> tuple[int, int]:
    if header_size < 16 or len(chunk) < 16:
        raise TruncatedChunk("tree node header too small")
    line, comment = struct.unpack_from("<II", chunk, 8)
    return line, comment


def _parse_node_ext(chunk: bytes, header_size: int, ext_len: int) -> tuple:
    line, comment = _parse_node_header(chunk, header_size)
    if len(chunk) < header_size + ext_len:
        raise TruncatedChunk("tree node body too small")
    ns_idx, name_idx = struct.unpack_from("<II", chunk, header_size)
    return line, comment, ns_idx, name_idx


def _parse_namespace(chunk: bytes, is_start: bool) -> NamespaceEvent:
    if len(chunk) < 24:
        raise TruncatedChunk("namespace chunk too small")
    line, comment = _parse_node_header(chunk, 16)
    prefix, uri = struct.unpack_from("<II", chunk, 16)
    return NamespaceEvent(is_start=is_start, prefix_idx=prefix, uri_idx=uri, line=line, comment_idx=comment)


def _parse_start_element(chunk: bytes, header_size: int) -> ElementNode:
    line, comment = _parse_node_header(chunk, header_size)
    if len(chunk) < header_size + 20:
        raise TruncatedChunk("start element body too small")
    ns_idx, name_idx, attr_start, attr_size, attr_count, id_idx, class_idx, style_idx = struct.unpack_from(
        "<IIHHHHHH", chunk, header_size
    )
    if attr_start != 20 or attr_size != 20:
        raise TruncatedChunk("unsupported start-element attribute layout")
    node = ElementNode(
        ns_idx=ns_idx,
        name_idx=name_idx,
        line=line,
        comment_idx=comment,
        id_index=id_idx,
        class_index=class_idx,
        style_index=style_idx,
    )
    base = header_size + attr_start
    if len(chunk) < base + attr_count * attr_size:
        raise TruncatedChunk("attributes run past the chunk")
    for i in range(attr_count):
        at = base + i * attr_size
        a_ns, a_name, a_raw, size, res0, type_code = struct.unpack_from("<IIIHBB", chunk, at)
        if size != 8 or res0 != 0:
            raise TruncatedChunk("unsupported attribute value layout")
        data = struct.unpack_from("<I", chunk, at + 16)[0]
        node.attributes.append(AttributeValue(a_ns, a_name, a_raw, type_code, data))
    return node


def _parse_cdata(chunk: bytes, header_size: int) -> CDataNode:
    line, comment = _parse_node_header(chunk, header_size)
    if len(chunk) < header_size + 12:
        raise TruncatedChunk("cdata chunk too small")
    data_idx = struct.unpack_from("<I", chunk, header_size)[0]
    size, res0, type_code = struct.unpack_from("<HBB", chunk, header_size + 4)
    if size != 8 or res0 != 0:
        raise TruncatedChunk("unsupported cdata value layout")
    data = struct.unpack_from("<I", chunk, header_size + 8)[0]
    return CDataNode(data_idx=data_idx, line=line, comment_idx=comment, type_code=type_code, data=data)


def _check_indices(doc: AxmlDocument) -> None:
    limit = len(doc.pool.strings)

    def check(idx: int, what: str) -> None:
        if idx != NO_INDEX and idx >= limit:
            raise BadStringPool(f"{what} index {idx} outside string pool of {limit}")

    for event in doc.pre_root + doc.post_root:
        if isinstance(event, NamespaceEvent):
            check(event.prefix_idx, "namespace prefix")
            check(event.uri_idx, "namespace uri")
    for node in doc.iter_elements():
        check(node.ns_idx, "element namespace")
        check(node.name_idx, "element name")
        for attr in node.attributes:
            check(attr.ns_idx, "attribute namespace")
            check(attr.name_idx, "attribute name")
            check(attr.raw_idx, "attribute raw value")
            if attr.type_code == TYPE_STRING:
                check(attr.data, "attribute string value")
        for child in node.children:
            if isinstance(child, CDataNode):
                check(child.data_idx, "cdata")


# ---------------------------------------------------------------------------
# serialization


def serialize_axml(doc: AxmlDocument) -> bytes:
    """Encode the document; inverse of parse_axml for valid documents."""
    body = bytearray()
    body += _serialize_pool(doc.pool)
    for event in doc.pre_root:
        body += _serialize_resource_map(doc) if isinstance(event, ResourceMapMarker) else _serialize_event(event)
    if doc.root is not None:
        _serialize_element(body, doc.root)
    for event in doc.post_root:
        body += _serialize_event(event)
    head = struct.pack("<HHI", RES_XML_TYPE, 8, 8 + len(body))
    return head + bytes(body)


def _serialize_pool(pool: StringPool) -> bytes:
    if pool.raw_chunk is not None:
        return pool.raw_chunk
    offsets = []
    blob = bytearray()
    for text in pool.strings:
        offsets.append(len(blob))
        if pool.utf8:
            encoded = text.encode("utf-8")
            blob += _encode_len8(len(text.encode("utf-16-le")) // 2)
            blob += _encode_len8(len(encoded))
            blob += encoded
            blob += b"\x00"
        else:
            units = text.encode("utf-16-le")
            blob += _encode_len16(len(units) // 2)
            blob += units
            blob += b"\x00\x00"
    while len(blob) % 4:
        blob += b"\x00"
    strings_start = 28 + 4 * len(pool.strings)
    header = struct.pack(
        "<HHIIIIII",
        RES_STRING_POOL_TYPE,
        28,
        strings_start + len(blob),
        len(pool.strings),
        0,
        pool.flags,
        strings_start,
        0,
    )
    return header + b"".join(struct.pack("<I", off) for off in offsets) + bytes(blob)


def _encode_len8(n: int) -> bytes:
    if n < 0x80:
        return bytes([n])
    if n < 0x8000:
        return bytes([(n >> 8) | 0x80, n & 0xFF])
    raise BadStringPool(f"string too long for UTF-8 pool encoding: {n}")


def _encode_len16(n: int) -> bytes:
    if n < 0x8000:
        return struct.pack("<H", n)
    if n < 0x80000000:
        return struct.pack("<HH", (n >> 16) | 0x8000, n & 0xFFFF)
    raise BadStringPool(f"string too long for UTF-16 pool encoding: {n}")


def _serialize_resource_map(doc: AxmlDocument) -> bytes:
    if doc.resource_map_raw is not None:
        return doc.resource_map_raw
    body = b"".join(struct.pack("<I", rid) for rid in doc.resource_map)
    return struct.pack("<HHI", RES_XML_RESOURCE_MAP_TYPE, 8, 8 + len(body)) + body


def _serialize_event(event) -> bytes:
    if isinstance(event, RawChunk):
        return event.blob
    ctype = RES_XML_START_NAMESPACE_TYPE if event.is_start else RES_XML_END_NAMESPACE_TYPE
    return struct.pack(
        "<HHIIIII",
        ctype,
        16,
        24,
        event.line,
        event.comment_idx,
        event.prefix_idx,
        event.uri_idx,
    )


def _serialize_element(out: bytearray, node: ElementNode) -> None:
    size = 36 + 20 * len(node.attributes)
    out += struct.pack(
        "<HHIII",
        RES_XML_START_ELEMENT_TYPE,
        16,
        size,
        node.line,
        node.comment_idx,
    )
    out += struct.pack(
        "<IIHHHHHH",
        node.ns_idx,
        node.name_idx,
        20,
        20,
        len(node.attributes),
        node.id_index,
        node.class_index,
        node.style_index,
    )
    for attr in node.attributes:
        out += struct.pack("<IIIHBBI", attr.ns_idx, attr.name_idx, attr.raw_idx, 8, 0, attr.type_code, attr.data)
    for child in node.children:
        if isinstance(child, ElementNode):
            _serialize_element(out, child)
        elif isinstance(child, CDataNode):
            out += struct.pack(
                "<HHIIIIHBBI",
                RES_XML_CDATA_TYPE,
                16,
                28,
                child.line,
                child.comment_idx,
                child.data_idx,
                8,
                0,
                child.type_code,
                child.data,
            )
        else:
            out += child.blob
    out += struct.pack(
        "<HHIIIII",
        RES_XML_END_ELEMENT_TYPE,
        16,
        24,
        node.end_line or node.line,
        node.end_comment_idx,
        node.ns_idx,
        node.name_idx,
    )


# ---------------------------------------------------------------------------
# queries and edits


def find_elements(doc: AxmlDocument, selector: Selector) -> list[ElementNode]:
    """All elements matching the selector, in depth-first pre-order."""
    return [node for node in doc.iter_elements() if _matches(doc, node, selector)]


def _matches(doc: AxmlDocument, node: ElementNode, selector: Selector) -> bool:
    if selector.element_name is not None and doc.element_name(node) != selector.element_name:
        return False
    if selector.path is not None:
        chain = []
        cursor = node.parent
        while cursor is not None:
            chain.append(doc.element_name(cursor))
            cursor = cursor.parent
        chain.reverse()
        if len(chain) < len(selector.path) or tuple(chain[len(chain) - len(selector.path) :]) != tuple(
            selector.path
        ):
            return False
    for constraint in selector.attrs:
        attr = find_attribute(doc, node, name=constraint.name, resource_id=constraint.resource_id)
        if attr is None:
            return False
        if constraint.expected is None:
            continue
        if isinstance(constraint.expected, TypedValue):
            if attr.type_code != constraint.expected.type_code or attr.data != constraint.expected.data:
                return False
        else:
            if attribute_string(doc, attr) != constraint.expected:
                return False
    return True


def attribute_string(doc: AxmlDocument, attr: AttributeValue) -> str | None:
    """The attribute's string value (typed string or raw form), if any."""
    if attr.type_code == TYPE_STRING:
        return doc.string(attr.data)
    return doc.string(attr.raw_idx)


def find_attribute(
    doc: AxmlDocument,
    node: ElementNode,
    name: str | None = None,
    resource_id: int | None = None,
    ns_uri: str | None = None,
) -> AttributeValue | None:
    """Locate an attribute by resource id (preferred) or by name."""
    for attr in node.attributes:
        if resource_id is not None:
            if doc.resource_id_of(attr.name_idx) == resource_id:
                return attr
            continue
        if name is not None and doc.string(attr.name_idx) == name:
            if ns_uri is None or doc.string(attr.ns_idx) == ns_uri:
                return attr
    return None


def remove_element(doc: AxmlDocument, node: ElementNode) -> AxmlDocument:
    """Remove the node and its whole subtree from the document."""
    if node.parent is None:
        raise CannotRemoveRoot("refusing to remove the document root")
    node.parent.children.remove(node)
    node.parent = None
    return doc


def set_attribute(doc: AxmlDocument, node: ElementNode, spec: AttrSpec, value) -> AxmlDocument:
    """Set (or create) an attribute with the given typed or string value.

    New attribute names are appended to the string pool; when the name
    carries a resource id the resource map is zero-padded out to the new
    index. Insertion keeps attributes sorted by resource id then name,
    matching the platform serializer's convention.
    """
    if isinstance(value, str):
        value = TypedValue(TYPE_STRING, doc.pool.intern(value))
    attr = find_attribute(doc, node, name=spec.name, resource_id=spec.resource_id, ns_uri=spec.ns_uri)
    if attr is not None:
        attr.type_code = value.type_code
        attr.data = value.data
        attr.raw_idx = value.data if value.type_code == TYPE_STRING else NO_INDEX
        return doc

    name_idx = _intern_attr_name(doc, spec.name, spec.resource_id)
    ns_idx = NO_INDEX if spec.ns_uri is None else doc.pool.intern(spec.ns_uri)
    attr = AttributeValue(
        ns_idx=ns_idx,
        name_idx=name_idx,
        raw_idx=value.data if value.type_code == TYPE_STRING else NO_INDEX,
        type_code=value.type_code,
        data=value.data,
    )
    position = _attr_insert_position(doc, node, attr)
    node.attributes.insert(position, attr)
    for label in ("id_index", "class_index", "style_index"):
        current = getattr(node, label)
        if current and current > position:
            setattr(node, label, current + 1)
    return doc


def _intern_attr_name(doc: AxmlDocument, name: str, resource_id: int | None) -> int:
    if resource_id is None:
        return doc.pool.intern(name)
    for idx, rid in enumerate(doc.resource_map):
        if rid == resource_id and doc.pool.strings[idx] == name:
            return idx
    if doc.pool.styles_frozen:
        raise BadStringPool("cannot append to a string pool that carries style data")
    doc.pool.strings.append(name)
    doc.pool.raw_chunk = None
    name_idx = len(doc.pool.strings) - 1
    # Pad the map out to the new name; zero entries mean "no id".
    doc.resource_map.extend([0] * (name_idx - len(doc.resource_map)))
    doc.resource_map.append(resource_id)
    doc.resource_map_raw = None
    if not doc.has_resource_map:
        doc.has_resource_map = True
        doc.pre_root.insert(0, ResourceMapMarker())
    return name_idx


def _attr_insert_position(doc: AxmlDocument, node: ElementNode, new: AttributeValue) -> int:
    def key(attr: AttributeValue):
        rid = doc.resource_id_of(attr.name_idx)
        return (rid is None, rid or 0, doc.string(attr.name_idx) or "")

    new_key = key(new)
    for i, existing in enumerate(node.attributes):
        if key(existing) > new_key:
            return i
    return len(node.attributes)


# ---------------------------------------------------------------------------
# document builder


class DocumentBuilder:
    """Programmatic construction of documents with an aapt-like layout.

    Attribute names that carry resource ids occupy the first string-pool
    indices, mirrored by the resource map; every other string is interned
    in first-use order. Line numbers are assigned depth-first.
    """

    def __init__(self, utf8: bool = False):
        self.doc = AxmlDocument(pool=StringPool(flags=UTF8_FLAG if utf8 else 0))
        self.doc.has_resource_map = True
        self.doc.pre_root.append(ResourceMapMarker())
        self._namespaces: list[tuple[str, str]] = []
        self._line = 0

    def namespace(self, prefix: str, uri: str) -> "DocumentBuilder":
        self._namespaces.append((prefix, uri))
        return self

    def root(self, name: str, attrs=(), children=()) -> AxmlDocument:
        # Mapped attribute names must own the first pool indices so the
        # resource map lines up; collect them before interning anything.
        self._collect_mapped_names(attrs, children)
        for prefix, uri in self._namespaces:
            self._line += 1
            self.doc.pre_root.append(
                NamespaceEvent(
                    is_start=True,
                    prefix_idx=self.doc.pool.intern(prefix),
                    uri_idx=self.doc.pool.intern(uri),
                    line=self._line,
                )
            )
        self.doc.root = self._build_element(name, attrs, children, parent=None)
        for event in reversed([e for e in self.doc.pre_root if isinstance(e, NamespaceEvent)]):
            self.doc.post_root.append(
                NamespaceEvent(
                    is_start=False,
                    prefix_idx=event.prefix_idx,
                    uri_idx=event.uri_idx,
                    line=self.doc.root.end_line,
                )
            )
        return self.doc

    def _collect_mapped_names(self, attrs, children) -> None:
        def walk(attrs, children):
            for name, _ns, rid, _value in attrs:
                if rid is not None and name not in self.doc.pool.strings[: len(self.doc.resource_map)]:
                    self.doc.pool.strings.append(name)
                    self.doc.resource_map.append(rid)
            for child in children:
                if isinstance(child, tuple):
                    walk(child[1], child[2])

        walk(attrs, children)

    def _build_element(self, name, attrs, children, parent) -> ElementNode:
        self._line += 1
        node = ElementNode(
            ns_idx=NO_INDEX,
            name_idx=self.doc.pool.intern(name),
            line=self._line,
            parent=parent,
        )
        # Platform serializer convention: resource-id order, then name.
        attrs = sorted(attrs, key=lambda a: (a[2] is None, a[2] or 0, a[0]))
        for attr_name, ns_uri, rid, value in attrs:
            if isinstance(value, str):
                value = TypedValue(TYPE_STRING, self.doc.pool.intern(value))
            if rid is not None:
                name_idx = self.doc.pool.strings.index(attr_name)
            else:
                name_idx = self.doc.pool.intern(attr_name)
            node.attributes.append(
                AttributeValue(
                    ns_idx=NO_INDEX if ns_uri is None else self.doc.pool.intern(ns_uri),
                    name_idx=name_idx,
                    raw_idx=value.data if value.type_code == TYPE_STRING else NO_INDEX,
                    type_code=value.type_code,
                    data=value.data,
                )
            )
            if rid == ATTR_ID:
                node.id_index = len(node.attributes)
        for child in children:
            if isinstance(child, tuple):
                child_name, child_attrs, child_children = child
                node.children.append(self._build_element(child_name, child_attrs, child_children, node))
            elif isinstance(child, str):
                self._line += 1
                idx = self.doc.pool.intern(child)
                node.children.append(CDataNode(data_idx=idx, line=self._line, type_code=TYPE_STRING, data=idx))
        node.end_line = self._line
        return node


def element(name: str, attrs=(), children=()) -> tuple:
    """Shorthand node spec for DocumentBuilder: (name, attrs, children)."""
    return (name, tuple(attrs), tuple(children))


def attr(name: str, value, ns_uri: str | None = None, resource_id: int | None = None) -> tuple:
    """Shorthand attribute spec: (name, ns_uri, resource_id, value)."""
    return (name, ns_uri, resource_id, value)
