"""Monthly playa inundation modeling: buffer extraction, LSTM training, evaluation."""

__version__ = "0.1.0"
