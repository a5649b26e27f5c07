"""Corpus ingestion: manifests, image/audio loading and the synthetic fixture."""
from .fixture import write_fixture
from .io import IMAGE_SIZE, bilinear_resize, fit_length, load_audio, load_image, read_wav, save_wav
from .manifest import DatasetManifest, ManifestItem, build_manifest

__all__ = [
    "IMAGE_SIZE",
    "DatasetManifest",
    "ManifestItem",
    "bilinear_resize",
    "build_manifest",
    "fit_length",
    "load_audio",
    "load_image",
    "read_wav",
    "save_wav",
    "write_fixture",
]
