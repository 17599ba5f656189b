#pragma once

// The hand-written experience that seeds every few-shot hub.

#include "dialoguegen/experience.hpp"

namespace dialoguegen {

inline Experience default_seed_shot() {
    Experience e;
    e.id = "seed";
    Persona maya;
    maya.name = "Maya";
    maya.nationality = "Canadian";
    maya.qualities = {"curious", "warm", "a little impatient"};
    maya.profession = "marine biologist";
    maya.lifestyle = "Spends summers on research boats and winters writing grant proposals in a small flat.";
    maya.speechStyle = "Quick, informal, full of questions.";
    maya.memory = {"Just got back from a three-week survey of kelp forests.",
                   "Grew up next to the ocean and has wanted to study it since she was nine."};
    maya.age = 34;

    Persona tomas;
    tomas.name = "Tomas";
    tomas.nationality = "Spanish";
    tomas.qualities = {"calm", "methodical", "dry sense of humour"};
    tomas.profession = "civil engineer";
    tomas.lifestyle = "Cycles to work, cooks elaborate dinners on weekends.";
    tomas.speechStyle = "Measured, precise, occasionally sarcastic.";
    tomas.memory = {"His company was hired to design a new sea wall for the harbour.",
                    "Worked on bridge projects across Europe for ten years."};
    tomas.age = 41;

    Persona aiko;
    aiko.name = "Aiko";
    aiko.nationality = "Japanese";
    aiko.qualities = {"thoughtful", "diplomatic", "stubborn about facts"};
    aiko.profession = "city council member";
    aiko.lifestyle = "Busy schedule of public meetings, reads history books late at night.";
    aiko.speechStyle = "Polite and careful, chooses words slowly.";
    aiko.memory = {"Has to vote on the sea wall budget next week.",
                   "Her grandparents lost their home to a flood."};
    aiko.age = 52;

    e.personas = {maya, tomas, aiko};
    e.relations = {{"Maya", "Tomas", "old university friends"},
                   {"Tomas", "Aiko", "professional acquaintances"},
                   {"Maya", "Aiko", "met once at a public hearing"}};
    e.situation = "A community cafe near the harbour, the evening before a public consultation on the new sea wall.";
    e.topic = "Whether the sea wall will protect the town without destroying the nearby kelp habitat.";
    e.conversationStarter = "Tomas, I saw the sea wall drawings today. Did anyone on your team talk to a biologist?";
    return e;
}

} // namespace dialoguegen
