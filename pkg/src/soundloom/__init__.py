"""soundloom: a self-perpetuating audio/lyric generation loop.

Clips from a catalogue are encoded into a latent space; lyric lines generated
from the current clip are fused with its latent code to predict the next
clip's code, which is retrieved by cosine similarity and streamed with
crossfades. A service layer exposes the loop to interactive clients.
"""

__version__ = "0.1.0"
