"""Regenerates vader_oracle.json from the reference vaderSentiment package.

Scores are taken before the reference implementation's final rounding.
"""
import json
import os
import sys

import vaderSentiment.vaderSentiment as vs

vs.round = lambda x, n=None: x  # keep full precision

SENTENCES = [
    "VADER is smart, handsome, and funny.",
    "VADER is smart, handsome, and funny!",
    "VADER is very smart, handsome, and funny.",
    "VADER is VERY SMART, handsome, and FUNNY.",
    "VADER is VERY SMART, handsome, and FUNNY!!!",
    "VADER is VERY SMART, uber handsome, and FRIGGIN FUNNY!!!",
    "VADER is not smart, handsome, nor funny.",
    "The book was good.",
    "At least it isn't a horrible book.",
    "The book was only kind of good.",
    "The plot was good, but the characters are uncompelling and the dialog is not great.",
    "Today SUX!",
    "Today only kinda sux! But I'll get by, lol",
    "Make sure you :) or :D today!",
    "Catch utf-8 emoji such as 💘 and 💋 and 😁",
    "Not bad at all",
    "The coffee is always cold when I get back to my office.",
    "I love it so much.",
    "This machine is amazing!",
    "The smartwatch feature doesn't work either.",
    "My only problem is that I have to recharge it twice a day.",
    "The only problem is that it is a bit noisy!",
    "I can't control it.",
    "I am absolutely in love with this coffee machine!",
    "It's a nice idea, but the machine has a design issue: it's too big.",
    "It doesn't keep my coffee warm if I'm far away from it.",
    "This is the best coffee machine I have ever seen!",
    "I highly recommend this product.",
    "It works great.",
    "Never so happy with a purchase.",
    "Without doubt the best gadget I own.",
    "No problems at all, and no regrets.",
    "This is the least useful thing I bought.",
    "It is not the worst, but not the best either.",
    "Is it any good?? Does it work???",
    "Why would anyone buy this????",
    "The app is the bomb and the coffee is to die for.",
    "Yeah right, like this thing ever works.",
    "It is barely acceptable and slightly overpriced.",
    "HORRIBLE customer service and TERRIBLE support!",
    "i hate it. i HATE it.",
    "Good good good good good",
    "The design is also very nice! 👍",
    "Absolutely fantastic, totally worth it, incredibly convenient.",
    "I wasn't impressed, and the coffee wasn't warm.",
    "Meh.",
    "It kind of works, sort of.",
    "Not happy, not sad, just indifferent.",
    "The temperature is perfect and it looks sleek :-)",
    "Terrible. Awful. Broken on arrival. Would not recommend!",
]

def main():
    assert len(SENTENCES) == 50
    sia = vs.SentimentIntensityAnalyzer()
    rows = [dict(text=s, **sia.polarity_scores(s)) for s in SENTENCES]
    out = os.path.join(os.path.dirname(os.path.abspath(__file__)), "vader_oracle.json")
    with open(out, "w", encoding="utf-8") as f:
        json.dump(rows, f, ensure_ascii=False, indent=1)
        f.write("\n")

if __name__ == "__main__":
    sys.exit(main())
