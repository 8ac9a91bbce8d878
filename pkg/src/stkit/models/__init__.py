from .config import TransformerConfig
from .layers import Module
from .transformer import IncrementalDecoder, SpeechFrontend, Transformer

__all__ = ["TransformerConfig", "Module", "IncrementalDecoder", "SpeechFrontend", "Transformer"]
