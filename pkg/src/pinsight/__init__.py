"""pinsight: reconstruct keypad PINs typed with a covered hand from
video+audio recordings, and evaluate the attack and its countermeasures."""

__version__ = "0.1.0"
