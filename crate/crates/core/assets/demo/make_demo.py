"""Regenerates the demo POI set, profile distribution, persona and transcript.

Run from this directory: python3 make_demo.py
"""
import csv
import json
import math
import random

CENTER = (39.90, 116.40)
HALF_KM = 12.0
KM_PER_DEG_LAT = 6371.0088 * math.pi / 180

CATEGORIES = {
    "residential": 400,
    "office": 160, "factory": 60, "company": 120, "school": 60,
    "restaurant": 120, "fast_food": 80, "cafe": 60,
    "mall": 40, "supermarket": 60, "convenience_store": 100, "market": 40,
    "gym": 50, "sports_center": 40, "stadium": 20,
    "park": 60, "scenic_spot": 30, "museum": 30,
    "cinema": 40, "ktv": 40, "bar": 50, "theater": 30,
    "hospital": 40, "clinic": 60, "pharmacy": 70,
    "bank": 60, "post_office": 40, "government_service": 40, "beauty_salon": 60, "repair_shop": 60,
}

MARGINALS = {
    "income": {"low": 0.2327, "relatively low": 0.2030, "medium": 0.3644, "relatively high": 0.1597, "high": 0.0401},
    "gender": {"male": 0.6356, "female": 0.3644},
    "education": {"bachelor degree": 0.5843, "high school degree": 0.2103, "master's degree": 0.1132, "junior high school degree": 0.0923},
    "age": {"0-30": 0.2271, "30-40": 0.2801, "40-60": 0.4085, "60-99": 0.0843},
}


def point(rng):
    north = rng.uniform(-HALF_KM, HALF_KM)
    east = rng.uniform(-HALF_KM, HALF_KM)
    lat = CENTER[0] + north / KM_PER_DEG_LAT
    lon = CENTER[1] + east / (KM_PER_DEG_LAT * math.cos(math.radians(CENTER[0])))
    return round(lat, 6), round(lon, 6)


def main():
    rng = random.Random(20240501)
    rows = []
    for cat, n in CATEGORIES.items():
        for i in range(n):
            lat, lon = point(rng)
            rows.append((f"{cat}-{i:03d}", f"{cat.replace('_', ' ')} {i}", cat, lat, lon))
    with open("pois.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["id", "name", "category", "lat", "lon"])
        w.writerows(rows)

    homes = [r for r in rows if r[2] == "residential"]
    regions = {
        "north": {"weight": 0.45, "residential_pois": [r[0] for r in homes if r[3] >= CENTER[0]], "attributes": MARGINALS},
        "south": {"weight": 0.55, "residential_pois": [r[0] for r in homes if r[3] < CENTER[0]], "attributes": MARGINALS},
    }
    with open("profiles.json", "w") as f:
        json.dump(regions, f, indent=2)
        f.write("\n")

    home = next(r for r in homes if r[3] < CENTER[0])
    work = next(r for r in rows if r[2] == "office" and math.dist(r[3:], home[3:]) * KM_PER_DEG_LAT < 6)
    persona = {
        "id": "p1",
        "attributes": {"age": "30-40", "education": "bachelor degree", "gender": "male", "income": "medium"},
        "home": {"lat": home[3], "lon": home[4]},
        "home_region": "south",
        "work": {"lat": work[3], "lon": work[4]},
    }
    with open("personas.jsonl", "w") as f:
        f.write(json.dumps(persona) + "\n")

    day = [
        ("sleep", "(00:00, 08:33)", "sleep:0.9, go to work:0.3, eat:0.2"),
        ("go to work", "(09:47, 17:49)", "go to work:0.9, eat:0.4, do shopping:0.1"),
        ("eat", "(18:45, 19:49)", "eat:0.8, go home:0.5, do shopping:0.3"),
        ("do shopping", "(20:01, 20:35)", "do shopping:0.6, go home:0.6, leisure or entertainment:0.3"),
        ("go home", "(21:40, 23:59)", "go home:0.9, sleep:0.4"),
    ]
    lines = [
        {"tag": "attitude", "persona_id": "p1", "turn": 0,
         "response": "⟨Preference⟩: [likes eating out after work, enjoys browsing shops in the evening, avoids sports on weekdays]"},
        {"tag": "routine", "persona_id": "p1", "turn": 0,
         "response": "⟨Routine⟩: [office hours roughly 10:00 to 18:00, dinner with colleagues, home before midnight]"},
    ]
    for k, (intention, window, pbc) in enumerate(day):
        lines.append({"tag": "pbc", "persona_id": "p1", "turn": k, "response": f"⟨Perceived likelihood⟩: [{pbc}]"})
        lines.append({"tag": "intention", "persona_id": "p1", "turn": k, "response": intention})
        lines.append({"tag": "time", "persona_id": "p1", "turn": k, "response": window})
    with open("transcript.jsonl", "w") as f:
        for line in lines:
            f.write(json.dumps(line, ensure_ascii=False) + "\n")


if __name__ == "__main__":
    main()
