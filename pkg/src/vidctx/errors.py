"""Exception hierarchy shared by all vidctx modules."""


class VidCtxError(Exception):
    """Base class for every error raised by this package."""


class InvalidArgument(VidCtxError, ValueError):
    pass


class ConfigError(VidCtxError, ValueError):
    pass


class BackendError(VidCtxError):
    pass


class TransportError(BackendError):
    """The inference server could not be reached or kept failing after retries."""


class ProtocolError(BackendError):
    """The server answered, but not with the data we asked for."""


class CacheIOError(VidCtxError, OSError):
    """Reading or writing the on-disk cache failed (distinct from a miss)."""


class DatasetError(VidCtxError):
    pass


class SchemaError(DatasetError, ValueError):
    pass


class FrameExtractionError(VidCtxError):
    def __init__(self, video_id: str, message: str):
        super().__init__(f"video {video_id!r}: {message}")
        self.video_id = video_id


class DecoderNotFound(FrameExtractionError):
    pass


class DecodeFailure(FrameExtractionError):
    pass


class MissingFrameFile(FrameExtractionError):
    pass
