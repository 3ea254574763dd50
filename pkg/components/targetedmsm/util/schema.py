from semver import Version

from targetedmsm.util.errors import ConfigError

# bumped on any change to report/config keys
SCHEMA = Version.parse("1.0.0")


def version(doc: dict) -> Version:
    """reads the schema version a stored document was written with

    @note documents without one predate versioning and read as 0.0.0
    """
    raw = str(doc.get("schema", "0.0.0")).lstrip("v")

    try:
        return Version.parse(raw)
    except ValueError as e:
        raise ConfigError(f"unreadable schema version {raw!r}") from e


def check(doc: dict) -> dict:
    found = version(doc)

    if found.major != SCHEMA.major:
        raise ConfigError(
            f"schema {found} is not readable by {SCHEMA}",
            found=str(found),
            expected=str(SCHEMA),
        )

    return doc
