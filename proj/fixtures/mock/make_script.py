#!/usr/bin/env python3
"""Regenerates script.jsonl, the replay script bundled for mock runs.

The output is deterministic: running this twice yields identical files.
"""
import json
import math
import random
from pathlib import Path

HERE = Path(__file__).resolve().parent
rng = random.Random(20240611)

NAMES = ["Amara", "Bilal", "Chen", "Dara", "Elif", "Farid", "Greta", "Hana", "Ivan", "Jonas",
         "Keiko", "Lars", "Mina", "Nadia", "Omar", "Priya", "Quinn", "Rosa", "Sami", "Tariq",
         "Uma", "Viktor", "Wen", "Yusuf", "Zara"]
NATIONALITIES = ["Nigerian", "Pakistani", "Chinese", "Irish", "Turkish", "Egyptian", "German", "Japanese",
                 "Russian", "Swedish", "Brazilian", "Indian", "Mexican", "Kenyan"]
QUALITIES = ["friendly", "funny", "ambitious", "confident", "caring", "supportive", "usually interrupts others",
             "shy", "stubborn", "patient", "sarcastic", "optimistic"]
PROFESSIONS = ["software engineer", "baker", "nurse", "high school teacher", "bus driver", "architect",
               "pharmacist", "journalist", "florist", "electrician", "accountant", "chef"]
LIFESTYLES = ["Runs every morning before work.", "Collects vinyl records and hosts listening parties.",
              "Spends weekends hiking with a local club.", "Volunteers at an animal shelter.",
              "Plays chess online late at night.", "Grows tomatoes on a tiny balcony.",
              "Takes evening pottery classes.", "Travels to a new city every few months."]
STYLES = ["Speaks fast and jokes a lot.", "Calm and thoughtful, with long pauses.",
          "Direct and to the point.", "Warm, uses lots of encouraging words.",
          "Formal, avoids slang.", "Chatty, tells stories from the past."]
RECENT = ["Just moved into a new apartment.", "Got a promotion last week.", "Lost their phone on the train.",
          "Started learning to play the guitar.", "Adopted a rescue dog.", "Finished a long project at work."]
LONG = ["Grew up in a small fishing village.", "Has wanted to open a cafe for years.",
        "Studied abroad for two years.", "Ran a marathon in their twenties.",
        "Took care of a younger sibling for a long time.", "Once lived on a sailboat for a summer."]
RELATIONS = ["friends", "co-workers", "siblings", "neighbours", "manager and employee", "cousins", "old classmates"]
SITUATIONS = ["A birthday dinner at a crowded restaurant.", "The office kitchen during a late afternoon break.",
              "A rainy Saturday at the community garden.", "A delayed train platform on a Monday morning.",
              "A neighbourhood barbecue in early summer.", "A hospital waiting room in the evening.",
              "A bakery just before it opens.", "A weekend hiking trip that went off course."]
TOPICS = ["Planning a surprise party for a mutual friend.", "Whether to sign up for a charity run together.",
          "Sharing the cost of a new shared workspace.", "Recommendations for a weekend trip.",
          "How to deal with a noisy neighbour.", "A promise to help someone move house.",
          "Learning a new hobby before the end of the year.", "Favourite childhood meals."]
STARTERS = ["Did anyone else hear what happened this morning?", "So, are we actually doing this or not?",
            "I have a favour to ask, and you might not like it.", "Guess who I ran into yesterday.",
            "Can we talk about next weekend for a second?", "You will never believe the week I had.",
            "Okay, I need everyone's opinion on something.", "Is it just me or is this taking forever?"]


def persona(name, with_details=True):
    p = {
        "name": name,
        "nationality": rng.choice(NATIONALITIES),
        "qualities": rng.sample(QUALITIES, 2),
        "profession": rng.choice(PROFESSIONS),
        "lifestyle": rng.choice(LIFESTYLES),
        "speechStyle": rng.choice(STYLES),
        "memory": {"recent": rng.choice(RECENT), "longTerm": rng.choice(LONG)},
    }
    if with_details:
        p["age"] = rng.randint(19, 70)
    return p


def experience(size):
    names = rng.sample(NAMES, size)
    personas = [persona(n) for n in names]
    relations = [{"a": names[i], "b": names[i + 1], "kind": rng.choice(RELATIONS)} for i in range(size - 1)]
    return {
        "personas": personas,
        "relations": relations,
        "situation": rng.choice(SITUATIONS),
        "topic": rng.choice(TOPICS),
        "conversationStarter": rng.choice(STARTERS),
    }


def batch(n, sizes):
    return "```json\n" + json.dumps([experience(rng.choice(sizes)) for _ in range(n)], indent=1) + "\n```"


AGENT_LINES = [
    "That sounds like a plan, but who is bringing the food?",
    "Honestly I was not expecting that at all.",
    "I will do that. Just remind me on Friday.",
    "Wait, I have a question. When did this start?",
    "fascinating, yeah. Tell me more about the second part.",
    "My sister tried something similar and it went badly.",
    "I promise to do that, no excuses this time.",
    "Not sure I agree. It feels rushed to me.",
    "Let me think about it for a second.",
    "I need a moment. Okay, go on.",
    "That reminds me of the summer we spent by the lake.",
    "We could split the cost three ways and see how it goes.",
    "I have something to say. Nobody asked the neighbours.",
    "Cheaper is not always better, trust me on that.",
    "Funny you mention it, I was reading about that last night.",
    "If it rains we move everything inside, simple.",
    "I would rather keep it small this year.",
    "Do you remember what happened last time we tried?",
    "Count me in, but only if we start early.",
    "That is a lot of work for one weekend.",
    "Maybe we ask around first and decide tomorrow.",
    "Sounds good. I can call them tonight.",
    "You always say that and then change your mind.",
    "Alright, I will bring the chairs and the music.",
    "Let us not overthink it, we can adjust later.",
    "Hmm, I never thought of it that way.",
    "Work has been chaos, so I might be late.",
    "Okay, I have to go now. Talk soon!",
    "Sorry, I have to leave now. Message me the details.",
    "I will check my calendar and let you know by Sunday.",
]

JUDGE_EXPLANATIONS = [
    "The speakers stay close to the stated topic and refer to the situation in several turns.",
    "Most turns reflect the personas, although a few replies are generic.",
    "The conversation mentions the setting early and keeps returning to the main topic.",
]


def top_logprobs(dist):
    """Wire-format logprobs.content for a single-token answer."""
    alts = [{"token": t, "logprob": math.log(p)} for t, p in dist]
    first = alts[0]
    return [{"token": first["token"], "logprob": first["logprob"], "top_logprobs": alts}]


def main():
    entries = []
    # Speaker selection (only used by modelDriven configs).
    entries.append({"match": "Only return the role.", "repeat": True, "reply": "Amara"})
    # Experience generation, generated personas.
    entries.append({"match": "Decide on the qualities and personality", "repeat": True,
                    "replies": [batch(8, [2, 3, 3, 4, 5]) for _ in range(6)]})
    # Experience generation, sampled or reused personas.
    entries.append({"match": "find the relations", "repeat": True,
                    "replies": [batch(8, [2, 2, 3]) for _ in range(6)]})
    # Judge: explanation, then the scored answer.
    entries.append({"match": "Explain why the conversation", "repeat": True, "replies": JUDGE_EXPLANATIONS})
    entries.append({"match": "overall experience", "repeat": True, "reply": "5",
                    "tokenProbs": top_logprobs([("5", 0.72), ("4", 0.2), (" 4", 0.04), ("3", 0.03), ("The", 0.01)])})
    entries.append({"match": "Answer with a single digit.", "repeat": True, "reply": "4",
                    "tokenProbs": top_logprobs([("4", 0.55), ("5", 0.35), ("3", 0.08), ("\n", 0.02)])})
    # Agent turns: anything else.
    entries.append({"repeat": True, "replies": AGENT_LINES})
    with open(HERE / "script.jsonl", "w") as f:
        for e in entries:
            f.write(json.dumps(e) + "\n")


if __name__ == "__main__":
    main()
