"""Exception hierarchy shared by all modules.

Every error carries the owning module name and a short ``kind`` token so
the command line can print ``ERROR:<module>:<kind>: message``.
"""

from __future__ import annotations


class UatagError(Exception):
    module = "uatag"

    def __init__(self, kind: str, message: str, line: int | None = None):
        self.kind = kind
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)

    def prefix(self) -> str:
        return f"ERROR:{self.module}:{self.kind}:"


class VocabularyError(UatagError):
    module = "vocab"


class IngestError(UatagError):
    module = "ingest"


class FeatureError(UatagError):
    module = "features"


class ForestError(UatagError):
    module = "forest"


class EscError(UatagError):
    module = "esc"


class FusionError(UatagError):
    module = "fusion"


class ClusterError(UatagError):
    module = "namecluster"


class EvaluationError(UatagError):
    module = "evalreport"


class ModelStoreError(UatagError):
    module = "modelstore"


class SynthError(UatagError):
    module = "synthgen"
