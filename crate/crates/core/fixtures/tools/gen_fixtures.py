#!/usr/bin/env python3
"""Writes the fixture corpus: app bundles, expected profiler documents,
corpus manifests and the dict_loop replay transcript.

Each app is described by its screens plus a list of ad-integration facts
(SDK activities, matched manifest entries, layout slots, trigger methods).
Bundles are rendered from the facts together with unrelated filler, and
the expected profiler documents are written from the facts alone.

Run from anywhere: python3 gen_fixtures.py
"""

import json
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
W = 1080

ADMOB = "Google AdMob"
META = "Meta Audience Network"
UNITY = "Unity Ads"
APPLOVIN = "AppLovin"
CHARTBOOST = "Chartboost"
IRONSOURCE = "ironSource"
VUNGLE = "Vungle"

ADMOB_ACTIVITY = "com.google.android.gms.ads.AdActivity"
ADMOB_APP_ID = {"name": "com.google.android.gms.ads.APPLICATION_ID", "value": "ca-app-pub-3940256099942544~3347511713"}
AD_ID_PERM = "com.google.android.gms.permission.AD_ID"
FILLER_META = {"name": "androidx.appcompat.theme", "value": "Theme.App"}


# ---------------------------------------------------------------- screens

def widget(cls, text=None, desc=None, rid=None, clickable=True, visual=None, depth=1, bounds=None, scrollable=False):
    w = {"class": cls}
    if text is not None:
        w["text"] = text
    if desc is not None:
        w["content_desc"] = desc
    if rid is not None:
        w["resource_id"] = rid
    w["bounds"] = bounds
    w["clickable"] = clickable
    if scrollable:
        w["scrollable"] = True
    w["depth"] = depth
    if visual is not None:
        w["visual"] = {"tag": visual[0], "description": visual[1]}
    return w


def button(text, **kw):
    return widget("android.widget.Button", text=text, **kw)


def row(text, **kw):
    return widget("android.widget.LinearLayout", text=text, **kw)


def label(text):
    return widget("android.widget.TextView", text=text, clickable=False)


def image(desc=None, visual=None, rid=None):
    return widget("android.widget.ImageView", desc=desc, visual=visual, rid=rid)


class App:
    def __init__(self, app_id, package):
        self.app_id = app_id
        self.package = package
        self.activities = []
        self.permissions = ["android.permission.INTERNET"]
        self.metadata = [FILLER_META]
        self.success = []
        self.screens = {}
        self.order = []
        self.transitions = []
        self.triggers = []
        self.emissions = []
        self.layouts = {}
        self.resources = {}
        self.code = []
        self.initial = None
        # Expected profiler output, authored alongside the facts.
        self.x_activities = set()
        self.x_permissions = []
        self.x_metadata = []
        self.x_libraries = set()
        self.x_slots = []
        self.x_triggers = {}
        self.x_trigger_libs = set()

    def rid(self, name):
        return f"{self.package}:id/{name}"

    # -- declarative evidence
    def sdk_activity(self, name, library):
        self.activities.append(name)
        self.x_activities.add(name)
        self.x_libraries.add(library)

    def ad_permission(self, perm, library=None):
        self.permissions.append(perm)
        self.x_permissions.append(perm)
        if library:
            self.x_libraries.add(library)

    def ad_metadata(self, entry, library):
        self.metadata.append(entry)
        self.x_metadata.append(entry)
        self.x_libraries.add(library)

    # -- structural evidence
    def layout(self, activity, tree):
        """`tree` is (class, id, children); slot tuples mark expected entries."""
        def build(node, depth):
            cls, rid, children, expect = node
            out = {"class": cls}
            if rid:
                out["id"] = rid
                if rid not in self.resources:
                    self.resources[rid] = f"0x7f09{len(self.resources):04x}"
            if children:
                out["children"] = [build(c, depth + 1) for c in children]
            if expect is not None:
                fmt, hexid = expect
                self.x_slots.append((activity, {
                    "activity": activity,
                    "view_class": cls,
                    "resource_id": rid,
                    "resource_id_hex": hexid,
                    "ad_format": fmt,
                    "depth": depth,
                }))
            return out
        self.layouts[activity] = build(tree, 0)

    # -- behavioral evidence
    def klass(self, name, superclass, methods):
        self.code.append({"class_name": name, "superclass": superclass, "methods": [
            {"signature": sig, "invokes": inv, **({"implements": imp} if imp else {})} for sig, inv, imp in methods
        ]})

    def expect_trigger(self, activity, signature, rank, library):
        self.x_triggers.setdefault(activity, []).append({"signature": signature, "rank": rank})
        if library:
            self.x_trigger_libs.add(library)

    # -- runtime behavior
    def screen(self, state, activity, widgets=None, regions=None, external=False):
        if not external and activity not in self.activities:
            self.activities.append(activity)
        if self.initial is None:
            self.initial = state
        if regions is not None:
            rendering = {"canvas": {"regions": regions, "contours": []}}
        else:
            y = 200
            for w in widgets:
                if w["bounds"] is None:
                    w["bounds"] = [0, y, W, y + 120]
                    y += 140
            rendering = {"hierarchy": widgets}
        s = {"activity": activity, "rendering": rendering}
        if external:
            s["external"] = True
        self.screens[state] = s
        self.order.append(state)
        return state

    def tap(self, state, label_or_index, target, **effect):
        idx = label_or_index if isinstance(label_or_index, int) else self.index_of(state, label_or_index)
        kind = "tap_region" if "canvas" in self.screens[state]["rendering"] else "tap"
        self.transitions.append({"from": state, "action": f"{kind}:{idx}", "next_state": target, **effect})
        return f"{kind}:{idx}"

    def back(self, state, target, **effect):
        self.transitions.append({"from": state, "action": "back", "next_state": target, **effect})

    def index_of(self, state, text):
        ws = self.screens[state]["rendering"]["hierarchy"]
        for i, w in enumerate(ws):
            if text in (w.get("text"), w.get("content_desc"), w.get("resource_id")):
                return i
        raise KeyError(f"{self.app_id}: no widget '{text}' on {state}")

    def ad(self, ad_id, host, ad_type, context=None, dwell=0.0, silent=False):
        t = {"ad_id": ad_id, "host_state": host, "ad_type": ad_type}
        if context:
            t["required_context"] = context
        if dwell:
            t["min_dwell_seconds"] = dwell
        if silent:
            t["silent"] = True
        self.triggers.append(t)

    def emit(self, state, action, offset, url):
        self.emissions.append({"from": state, "action": action, "lines": [
            {"offset_seconds": offset, "tag": "chromium", "message": f"GET {url} HTTP/1.1"}
        ]})

    def bundle(self):
        doc = {
            "app_id": self.app_id,
            "manifest": {
                "package": self.package,
                "activities": self.activities,
                "permissions": self.permissions,
                "metadata": self.metadata,
            },
        }
        if self.success:
            doc["manifest"]["registered_success_activities"] = self.success
        if self.layouts:
            doc["layouts"] = self.layouts
        if self.resources:
            doc["resource_map"] = self.resources
        if self.code:
            doc["code_summary"] = self.code
        behavior = {"initial_state": self.initial, "transitions": self.transitions, "ad_triggers": self.triggers}
        if self.emissions:
            behavior["emissions"] = self.emissions
        doc["behavior"] = behavior
        doc["rendering"] = {s: self.screens[s] for s in self.order}
        return doc

    def expected(self):
        slots = [e for _, e in sorted(self.x_slots, key=lambda p: p[0])]
        slot = {"entries": slots}
        return {
            "screen": {
                "ad_related_activities": sorted(self.x_activities),
                "matched_permissions": self.x_permissions,
                "matched_metadata": self.x_metadata,
                "detected_libraries": sorted(self.x_libraries),
            },
            "slot": slot,
            "trigger": {
                "methods_by_activity": {k: self.x_triggers[k] for k in sorted(self.x_triggers)},
                "libraries": sorted(self.x_trigger_libs),
            },
        }


def settings_tree(a, parent, activity, sections, rows=3):
    """A settings screen reached from `parent`'s "Settings" entry, with one
    page per section and a few toggles on each page."""
    top = a.screen(f"{parent}_settings", activity, [row(s) for s in sections])
    a.tap(parent, "Settings", top)
    a.back(top, parent)
    for k, name in enumerate(sections):
        page = a.screen(f"{parent}_settings_{k}", activity, [label(name)] + [
            widget("android.widget.Switch", text=f"{name} option {j + 1}") for j in range(rows)
        ])
        a.tap(top, name, page)
        a.back(page, top)
        for j in range(rows):
            a.tap(page, f"{name} option {j + 1}", page)
    return top


def slot(cls, rid, fmt, hexid, children=()):
    return (cls, rid, list(children), (fmt, hexid))


def node(cls, rid=None, children=()):
    return (cls, rid, list(children), None)


# ---------------------------------------------------------------- apps

def dict_loop():
    a = App("dict_loop", "com.lexica.musicdict")
    a.activities.append("MainActivity")
    a.sdk_activity(ADMOB_ACTIVITY, ADMOB)
    a.ad_metadata(ADMOB_APP_ID, ADMOB)
    ad_view = a.rid("adView")
    a.resources[ad_view] = "0x7f0a001c"
    a.resources[a.rid("list1")] = "0x7f0a0085"
    a.layout("MainActivity", node("androidx.drawerlayout.widget.DrawerLayout", a.rid("drawer"), [
        node("LinearLayout", None, [
            node("ListView", a.rid("list1")),
            slot("com.google.android.gms.ads.AdView", ad_view, "banner", "0x7f0a001c"),
        ]),
        node("com.google.android.material.navigation.NavigationView", a.rid("nav")),
    ]))
    a.klass("MainActivity", "androidx.appcompat.app.AppCompatActivity", [
        ("onCreate", ["com.google.android.gms.ads.MobileAds.initialize", "com.google.android.gms.ads.AdView.loadAd"], None),
        ("onItemClick", ["android.content.Intent.<init>"], None),
    ])
    a.expect_trigger("MainActivity", "onCreate", 2, ADMOB)

    items = [widget("android.widget.ImageButton", desc="Open navigation drawer", bounds=[0, 102, 168, 270], depth=1),
             widget("android.widget.ListView", rid=a.rid("list1"), bounds=[0, 270, 1080, 2100], depth=1)]
    for k in range(10):
        top = 270 + k * 180
        items.append(widget("android.widget.LinearLayout", text=f"Music {k + 1}", bounds=[0, top, 1080, top + 170], depth=2))
    main = a.screen("main", "MainActivity", items)
    for k in range(10):
        a.screen(f"word{k}", "WordActivity", [
            widget("android.widget.ImageButton", desc="Previous word", bounds=[0, 102, 168, 270]),
            label("Definition"),
            widget("android.widget.ImageButton", desc="Next word", bounds=[912, 102, 1080, 270]),
            button("Listen"),
        ])
    for k in range(10):
        a.tap(main, f"Music {k + 1}", f"word{k}")
        a.tap(f"word{k}", "Next word", f"word{(k + 1) % 10}")
        a.tap(f"word{k}", "Previous word", f"word{(k - 1) % 10}")
        a.back(f"word{k}", main)
    drawer = a.screen("drawer", "MainActivity", [
        widget("androidx.appcompat.widget.LinearLayoutCompat", bounds=[0, 300, 700, 420]),
        widget("android.widget.CheckedTextView", text="Other App", bounds=[0, 440, 700, 560]),
        widget("androidx.appcompat.widget.LinearLayoutCompat", text="Rate", bounds=[0, 580, 700, 700]),
        widget("androidx.appcompat.widget.LinearLayoutCompat", text="Share", bounds=[0, 720, 700, 840]),
        widget("androidx.appcompat.widget.LinearLayoutCompat", text="Privacy Policy", bounds=[0, 860, 700, 980]),
    ])
    a.tap(main, "Open navigation drawer", drawer)
    a.tap(drawer, 0, main)
    a.back(drawer, main)
    store = a.screen("store", "com.android.vending.AssetBrowserActivity", [
        label("Apps from the same developer"), button("Install"),
    ], external=True)
    a.tap(drawer, "Other App", store)
    a.back(store, main)
    rate = a.screen("rate", "MainActivity", [label("Enjoying the app?"), button("Later"), button("Rate now")])
    a.tap(drawer, "Rate", rate)
    a.tap(rate, "Later", drawer)
    a.tap(rate, "Rate now", drawer)
    a.back(rate, drawer)
    share = a.screen("share", "com.android.internal.app.ChooserActivity", [button("Messages"), button("Email")], external=True)
    a.tap(drawer, "Share", share)
    a.back(share, drawer)
    privacy = a.screen("privacy", "PolicyActivity", [label("Privacy policy text"), button("Close")])
    a.tap(drawer, "Privacy Policy", privacy)
    a.tap(privacy, "Close", drawer)
    a.back(privacy, drawer)
    a.ad("play_redirect", store, "custom")
    return a


def notes_plain():
    a = App("notes_plain", "org.quietnotes")
    main = a.screen("main", "NotesActivity", [
        label("My notes"), button("New note"), row("Groceries"), row("Meeting notes"), row("Ideas"),
        widget("android.widget.ImageButton", desc="Settings"),
    ])
    editor = a.screen("editor", "EditorActivity", [widget("android.widget.EditText", text="Type here"), button("Save"), button("Discard")])
    settings = a.screen("settings", "SettingsActivity", [row("Theme"), row("Backup"), row("About")])
    about = a.screen("about", "SettingsActivity", [label("Version 2.1"), button("Licenses")])
    for item in ["New note", "Groceries", "Meeting notes", "Ideas"]:
        a.tap(main, item, editor)
    a.tap(editor, "Save", main)
    a.tap(editor, "Discard", main)
    a.back(editor, main)
    a.tap(main, "Settings", settings)
    a.tap(settings, "About", about)
    a.back(settings, main)
    a.back(about, settings)
    return a


def canvas_frog():
    a = App("canvas_frog", "com.pondplay.eggs")
    a.sdk_activity("com.unity3d.ads.adunit.AdUnitActivity", UNITY)
    # Outside the com.unity3d.ads prefix, so the profiler does not flag it.
    a.activities.append("com.unity3d.services.ads.adunit.AdUnitTransparentActivity")
    a.klass("GameActivity", "android.app.Activity", [
        ("onStart", ["com.unity3d.ads.UnityAds.initialize"], None),
        ("onEggTapped", ["com.unity3d.ads.UnityAds.load", "com.unity3d.ads.UnityAds.show"], None),
    ])
    a.expect_trigger("GameActivity", "onEggTapped", 3, UNITY)
    a.expect_trigger("GameActivity", "onStart", 1, UNITY)
    labels = [
        ("UI_ELEMENT", "Blue round social network icon"),
        ("UI_ELEMENT", "Bird icon for posting to a microblog"),
        ("UI_ELEMENT", "Gear icon for settings"),
        ("UI_ELEMENT", "Speaker icon toggling sound"),
        ("UI_ELEMENT", "Title banner reading Egg Pond"),
        ("UI_ELEMENT", "Cartoon pond with lily pads"),
        ("UI_ELEMENT", "Small duck mascot"),
        ("AD", "Large promotional picture of a surprise egg marked FREE"),
        ("UI_ELEMENT", "Yellow egg on a nest"),
        ("UI_ELEMENT", "Green egg on a nest"),
        ("UI_ELEMENT", "Red egg on a nest"),
        ("UI_ELEMENT", "Purple egg on a nest"),
        ("UI_ELEMENT", "Star counter showing 12"),
        ("UI_ELEMENT", "Trophy icon for achievements"),
        ("UI_ELEMENT", "Calendar icon for daily tasks"),
        ("UI_ELEMENT", "Palette icon for colors"),
        ("UI_ELEMENT", "Question mark help icon"),
        ("UI_ELEMENT", "Left arrow icon"),
        ("AD", "Round frog button labelled 'More Games'"),
    ]
    regions = []
    for i, (tag, desc) in enumerate(labels):
        r, c = divmod(i, 4)
        left, top = 20 + c * 265, 300 + r * 360
        regions.append({"bounds": [left, top, left + 240, top + 330], "kind": "button", "visual": {"tag": tag, "description": desc}})
    home = a.screen("home", "GameActivity", regions=regions)
    nest_regions = [
        {"bounds": [100, 400, 980, 1400], "kind": "image", "visual": {"tag": "UI_ELEMENT", "description": "Egg hatching animation"}},
        {"bounds": [390, 1600, 690, 1800], "kind": "button", "visual": {"tag": "UI_ELEMENT", "description": "Left arrow icon"}},
    ]
    nest = a.screen("nest", "GameActivity", regions=nest_regions)
    video = a.screen("egg_video", "com.unity3d.ads.adunit.AdUnitActivity", [
        widget("android.widget.VideoView"), widget("android.widget.ImageButton", desc="Close ad"),
    ])
    promo = a.screen("promo_store", "com.android.vending.AssetBrowserActivity", [label("Frog Jump Adventure"), button("Install")], external=True)
    for i in (8, 9, 10, 11):
        a.tap(home, i, nest)
    a.tap(nest, 1, home)
    a.back(nest, home)
    a.tap(home, 7, video)
    a.tap(video, "Close ad", home)
    a.back(video, home)
    a.tap(home, 18, promo)
    a.back(promo, home)
    a.ad("egg_video", video, "popup")
    a.ad("more_games", promo, "custom")
    return a


def quiz_chain():
    a = App("quiz_chain", "net.brainy.quiz")
    a.activities.append("MainActivity")
    a.sdk_activity(ADMOB_ACTIVITY, ADMOB)
    a.ad_metadata(ADMOB_APP_ID, ADMOB)
    a.klass("MainActivity", "android.app.Activity", [("onCreate", ["android.view.LayoutInflater.inflate"], None)])
    a.klass("BaseActivity", "MainActivity", [("onResume", [], None)])
    a.klass("AdHelper", "BaseActivity", [
        ("prepareBreak", ["com.google.android.gms.ads.interstitial.InterstitialAd.load"], None),
    ])
    a.klass("RewardCallbacks", "java.lang.Object", [
        ("onAdDismissedFullScreenContent", [], ["com.google.android.gms.ads.FullScreenContentCallback"]),
    ])
    a.expect_trigger("MainActivity", "prepareBreak", 2, ADMOB)
    a.expect_trigger("<unattributed>", "onAdDismissedFullScreenContent", 1, None)
    main = a.screen("main", "MainActivity", [
        label("Brainy Quiz"), button("Start Quiz"), button("Leaderboard"), button("Settings"), button("Get Coins"),
    ])
    q = a.screen("question", "QuestionActivity", [label("Which planet is largest?"), row("Mars"), row("Jupiter"), row("Venus")])
    result = a.screen("result", "QuestionActivity", [label("Round complete"), button("Next round"), button("Home")])
    brk = a.screen("break_ad", "com.google.android.gms.ads.AdActivity", [widget("android.webkit.WebView"), widget("android.widget.ImageButton", desc="Close")])
    board = a.screen("board", "BoardActivity", [row("1. Ana 920"), row("2. Li 870"), row("3. Sam 650")])
    settings = a.screen("settings", "SettingsActivity", [row("Sound"), row("Language")])
    shop = a.screen("coins", "ShopActivity", [label("Coins: 40"), button("Buy 500 coins"), button("Watch video for 50 coins")])
    reward = a.screen("reward_video", "com.google.android.gms.ads.AdActivity", [widget("android.widget.VideoView"), widget("android.widget.ImageButton", desc="Close")])
    a.tap(main, "Start Quiz", q)
    for opt in ("Mars", "Jupiter", "Venus"):
        a.tap(q, opt, result)
    a.back(q, main)
    a.tap(result, "Next round", brk)
    a.tap(result, "Home", main)
    a.tap(brk, "Close", q)
    a.back(brk, q)
    a.tap(main, "Leaderboard", board)
    a.back(board, main)
    a.tap(main, "Settings", settings)
    a.back(settings, main)
    a.tap(main, "Get Coins", shop)
    a.back(shop, main)
    a.tap(shop, "Watch video for 50 coins", reward)
    a.tap(reward, "Close", shop)
    a.back(reward, shop)
    a.ad("round_break", brk, "popup")
    a.ad("coin_video", reward, "popup")
    return a


def obfuscated_reader():
    a = App("obfuscated_reader", "o.r")
    a.klass("o.r.a", "android.app.Activity", [
        ("a", ["o.r.c.b"], None),
        ("b", ["com.google.android.gms.ads.interstitial.InterstitialAd.show"], None),
    ])
    a.klass("o.r.c", "java.lang.Object", [("b", ["com.google.android.gms.ads.rewarded.RewardedAd.load"], None)])
    a.expect_trigger("o.r.a", "b", 3, ADMOB)
    a.expect_trigger("<unattributed>", "b", 2, ADMOB)
    main = a.screen("main", "o.r.a", [label("Library")] + [row(f"Chapter {i}") for i in range(1, 7)] + [button("Unlock all chapters")])
    page = a.screen("page", "o.r.b", [label("Chapter text"), button("Next page"), button("Contents")])
    inter = a.screen("interstitial", "o.r.d", [widget("android.webkit.WebView"), widget("android.widget.ImageButton", desc="Close")])
    unlock = a.screen("unlock", "o.r.a", [label("Unlock every chapter"), button("Buy for 2.99"), button("Watch an ad to unlock")])
    reward = a.screen("reward", "o.r.d", [widget("android.widget.VideoView"), button("Skip")])
    for i in range(1, 7):
        a.tap(main, f"Chapter {i}", inter if i == 4 else page)
    a.tap(page, "Next page", page)
    a.tap(page, "Contents", main)
    a.back(page, main)
    a.tap(inter, "Close", page)
    a.back(inter, page)
    a.tap(main, "Unlock all chapters", unlock)
    a.tap(unlock, "Watch an ad to unlock", reward)
    a.back(unlock, main)
    a.tap(reward, "Skip", unlock)
    a.back(reward, unlock)
    a.ad("chapter_break", inter, "popup")
    a.ad("unlock_video", reward, "popup")
    return a


def weather_gift():
    a = App("weather_gift", "io.skycast")
    a.sdk_activity("com.applovin.adview.AppLovinFullscreenActivity", APPLOVIN)
    a.ad_permission(AD_ID_PERM)
    a.metadata.append({"name": "applovin.sdk.key", "value": "k-1234"})
    banner = a.rid("radarBanner")
    a.resources[banner] = "0x7f0b0011"
    a.layout("RadarActivity", node("FrameLayout", None, [
        node("com.skycast.RadarView", a.rid("radar")),
        slot("com.applovin.mediation.ads.MaxAdView", banner, "banner", "0x7f0b0011"),
    ]))
    main = a.screen("main", "ForecastActivity", [label("Today 21°"), button("Hourly"), button("Week"), button("Radar"), button("Daily Gift")])
    hourly = a.screen("hourly", "ForecastActivity", [row("09:00 18°"), row("12:00 21°"), row("15:00 22°")])
    week = a.screen("week", "ForecastActivity", [row("Mon"), row("Tue"), row("Wed"), row("Thu")])
    radar = a.screen("radar", "RadarActivity", [widget("com.skycast.RadarView", rid=a.rid("radar")), button("Layers")])
    radar_ad = a.screen("radar_sponsor", "RadarActivity", [widget("com.skycast.RadarView", rid=a.rid("radar")), label("Sponsored forecast"), button("Layers")])
    promo = a.screen("promo", "PromoActivity", [label("Spin the wheel!"), button("Spin")])
    a.success.append("PromoActivity")
    a.tap(main, "Hourly", hourly)
    a.tap(main, "Week", week)
    act = a.tap(main, "Radar", radar)
    a.tap(radar, "Layers", radar_ad)
    a.back(radar_ad, radar)
    a.back(radar, main)
    a.back(hourly, main)
    a.back(week, main)
    a.tap(main, "Daily Gift", promo)
    a.tap(promo, "Spin", promo)
    a.back(promo, main)
    a.emit(main, act, 2.2, "https://googleads.g.doubleclick.net/mads/gma?ad_unit=radar")
    a.ad("activity:PromoActivity", promo, "custom", silent=True)
    a.ad("radar_sponsor", radar_ad, "embedded")
    return a


def flashlight_crash():
    a = App("flashlight_crash", "com.brightbeam.torch")
    a.sdk_activity(ADMOB_ACTIVITY, ADMOB)
    a.ad_permission(AD_ID_PERM)
    main = a.screen("main", "TorchActivity", [
        widget("android.widget.ToggleButton", text="Torch"), button("Strobe"), button("Share"), button("Settings"),
    ])
    settings = a.screen("settings", "SettingsActivity", [row("Brightness"), row("Go Premium"), row("About")])
    premium = a.screen("premium", "PremiumActivity", [label("Premium features"), button("Restore purchase"), button("Watch video to unlock")])
    video = a.screen("video", "com.google.android.gms.ads.AdActivity", [widget("android.widget.VideoView"), widget("android.widget.ImageButton", desc="Close")])
    share = a.screen("share", "com.android.internal.app.ChooserActivity", [button("Messages")], external=True)
    a.tap(main, "Torch", main)
    a.tap(main, "Strobe", main, crash=True)
    a.tap(main, "Share", share)
    a.back(share, main)
    a.tap(main, "Settings", settings)
    a.back(settings, main)
    a.tap(settings, "Go Premium", premium)
    a.back(premium, settings)
    a.tap(premium, "Watch video to unlock", video)
    a.tap(video, "Close", premium)
    a.back(video, premium)
    a.ad("unlock_video", video, "popup")
    return a


def radio_stream():
    a = App("radio_stream", "fm.wavecast")
    a.sdk_activity(ADMOB_ACTIVITY, ADMOB)
    a.ad_metadata(ADMOB_APP_ID, ADMOB)
    banner = a.rid("playerBanner")
    a.resources[banner] = "0x7f0c0042"
    a.layout("PlayerActivity", node("ConstraintLayout", None, [
        node("ImageView", a.rid("cover")),
        node("LinearLayout", None, [node("ImageButton", a.rid("pause")), node("ImageButton", a.rid("skip"))]),
        slot("com.google.android.gms.ads.AdView", banner, "banner", "0x7f0c0042"),
    ]))
    a.klass("PlayerActivity", "android.app.Activity", [("onStationReady", ["com.google.android.gms.ads.AdView.loadAd"], None)])
    a.expect_trigger("PlayerActivity", "onStationReady", 2, ADMOB)
    names = ["Jazz Lounge", "Morning Talk", "Classic Rock", "City News", "Country Roads", "Opera Night",
             "Kids Corner", "Drive Time", "Indie Mix", "Lo-Fi Beats"]
    main = a.screen("main", "HomeActivity", [label("WaveCast"), button("Favorites"), button("Sleep timer"), button("Equalizer"), button("Settings"), button("Stations")])
    stations = a.screen("stations", "HomeActivity", [row(n) for n in names])
    settings_tree(a, main, "SettingsActivity", ["Streaming quality", "Alarms", "Car mode", "Account"])
    player = a.screen("player", "PlayerActivity", [
        widget("android.widget.ImageView", rid=a.rid("cover"), clickable=False),
        widget("android.widget.ImageButton", desc="Pause"), widget("android.widget.ImageButton", desc="Skip"),
        widget("android.widget.ImageButton", desc="Add to favorites"),
    ])
    fav = a.screen("favorites", "HomeActivity", [label("No favorites yet")])
    timer = a.screen("timer", "HomeActivity", [row("15 min"), row("30 min"), row("60 min")])
    eq = a.screen("eq", "HomeActivity", [row("Flat"), row("Bass"), row("Vocal")])
    a.tap(main, "Favorites", fav)
    a.tap(main, "Sleep timer", timer)
    a.tap(main, "Equalizer", eq)
    a.tap(main, "Stations", stations)
    for s in (fav, timer, eq, stations):
        a.back(s, main)
    for name in names:
        act = a.tap(stations, name, player)
        a.emit(stations, act, 6.5, "https://pagead2.googlesyndication.com/pagead/ads?client=wavecast")
    a.tap(player, "Pause", player)
    a.tap(player, "Add to favorites", player)
    a.back(player, stations)
    # The banner loads once the stream has buffered.
    a.ad("player_banner", player, "embedded", dwell=10.0)
    return a


def recipe_native():
    a = App("recipe_native", "com.panbook.recipes")
    a.sdk_activity("com.facebook.ads.AudienceNetworkActivity", META)
    native = a.rid("nativeAdContainer")
    a.resources[native] = "0x7f0d0007"
    a.layout("HomeActivity", node("LinearLayout", None, [
        node("RecyclerView", a.rid("categories")),
        slot("com.facebook.ads.NativeAdLayout", native, "native", "0x7f0d0007"),
    ]))
    a.klass("HomeActivity", "android.app.Activity", [
        ("loadNative", ["com.facebook.ads.NativeAd.loadAd"], None),
        ("onCreate", ["com.facebook.ads.AudienceNetworkAds.initialize"], None),
    ])
    a.expect_trigger("HomeActivity", "loadNative", 2, META)
    a.expect_trigger("HomeActivity", "onCreate", 1, META)
    main = a.screen("main", "HomeActivity", [
        label("Panbook"), row("Breakfast"), row("Lunch"), row("Dinner"), row("Desserts"), row("Drinks"),
        widget("android.widget.FrameLayout", rid=native),
    ])
    lst = a.screen("list", "ListActivity", [row("Recipe A"), row("Recipe B"), row("Recipe C")])
    detail = a.screen("detail", "RecipeActivity", [label("Ingredients"), button("Start cooking"), button("Save")])
    site = a.screen("advertiser", "org.chromium.chrome.browser.ChromeTabbedActivity", [label("Kitchen gadgets sale")], external=True)
    for c in ("Breakfast", "Lunch", "Dinner", "Desserts", "Drinks"):
        a.tap(main, c, lst)
    for r in ("Recipe A", "Recipe B", "Recipe C"):
        a.tap(lst, r, detail)
    a.back(lst, main)
    a.back(detail, lst)
    a.tap(detail, "Start cooking", detail)
    a.tap(main, native, site)
    a.back(site, main)
    a.ad("native_click", site, "embedded")
    return a


def puzzle_rewarded():
    a = App("puzzle_rewarded", "games.tilesmith")
    a.sdk_activity(ADMOB_ACTIVITY, ADMOB)
    a.ad_metadata(ADMOB_APP_ID, ADMOB)
    b = a.rid("bannerAd")
    a.resources[b] = "0x7f0e0003"
    a.layout("BoardActivity", node("RelativeLayout", None, [
        node("GridLayout", a.rid("grid")),
        slot("com.google.android.gms.ads.AdView", b, "banner", "0x7f0e0003"),
    ]))
    a.klass("HintDialog", "android.app.Dialog", [
        ("onWatch", ["com.google.android.gms.ads.rewarded.RewardedAd.show"], None),
    ])
    a.klass("BoardActivity", "android.app.Activity", [("onLevelStart", ["com.google.android.gms.ads.rewarded.RewardedAd.load"], None)])
    a.expect_trigger("<unattributed>", "onWatch", 3, ADMOB)
    a.expect_trigger("BoardActivity", "onLevelStart", 2, ADMOB)
    main = a.screen("main", "MenuActivity", [label("Tilesmith"), button("Levels"), button("Settings"), button("Play")])
    levels = a.screen("levels", "MenuActivity", [row("Level 1"), row("Level 2"), row("Level 3 (locked)")])
    board = a.screen("board", "BoardActivity", [widget("android.widget.GridLayout", rid=a.rid("grid"), clickable=False), button("Undo"), button("Menu"), button("Get free hint")])
    dialog = a.screen("hint", "BoardActivity", [label("Need a hint?"), button("Buy 10 hints"), button("Watch video")])
    video = a.screen("video", "com.google.android.gms.ads.AdActivity", [widget("android.widget.VideoView"), widget("android.widget.ImageButton", desc="Close")])
    settings = a.screen("settings", "MenuActivity", [row("Music"), row("Vibration")])
    a.tap(main, "Levels", levels)
    a.tap(main, "Settings", settings)
    a.tap(main, "Play", board)
    a.tap(levels, "Level 1", board)
    a.tap(levels, "Level 2", board)
    a.back(levels, main)
    a.back(settings, main)
    a.tap(board, "Undo", board)
    a.tap(board, "Menu", main)
    a.back(board, main)
    a.tap(board, "Get free hint", dialog)
    a.back(dialog, board)
    a.tap(dialog, "Watch video", video)
    a.tap(video, "Close", board)
    a.back(video, board)
    a.ad("hint_video", video, "popup")
    return a


def shopping_sponsored():
    a = App("shopping_sponsored", "shop.cartly")
    a.sdk_activity("com.facebook.ads.AudienceNetworkActivity", META)
    a.sdk_activity("com.facebook.ads.internal.ipc.RemoteANActivity", META)
    fb = a.rid("fbBanner")
    a.resources[fb] = "0x7f0f0021"
    a.layout("CatalogActivity", node("CoordinatorLayout", None, [
        node("RecyclerView", a.rid("products")),
        slot("com.facebook.ads.AdView", fb, "banner", "0x7f0f0021"),
    ]))
    a.klass("CatalogActivity", "android.app.Activity", [
        ("onBind", ["com.facebook.ads.AdView.loadAd"], None),
        ("onCarousel", ["com.facebook.ads.InterstitialAd.show"], ["com.facebook.ads.InterstitialAdListener"]),
    ])
    a.expect_trigger("CatalogActivity", "onCarousel", 3, META)
    a.expect_trigger("CatalogActivity", "onBind", 2, META)
    main = a.screen("main", "CatalogActivity", [
        label("Cartly")] + [row(c) for c in CATEGORIES] + [row("Settings"), row("Recommended for you"), row("Sponsored: Trail sneakers"),
    ])
    cat = a.screen("category", "CatalogActivity", [row("Item 1"), row("Item 2"), row("Item 3")])
    item = a.screen("item", "ItemActivity", [label("Price 49"), button("Add to cart"), button("Reviews")])
    rec = a.screen("recommended", "CatalogActivity", [row("Picked item A"), row("Picked item B"), row("See more picks")])
    carousel = a.screen("carousel_ad", "com.facebook.ads.AudienceNetworkActivity", [widget("android.webkit.WebView"), widget("android.widget.ImageButton", desc="Close")])
    sponsor = a.screen("sponsor_site", "org.chromium.chrome.browser.ChromeTabbedActivity", [label("Trail sneakers")], external=True)
    for c in CATEGORIES:
        a.tap(main, c, cat)
    settings_tree(a, main, "ItemActivity", ["Addresses", "Payments", "Orders"])
    a.back(cat, main)
    for i in ("Item 1", "Item 2", "Item 3"):
        a.tap(cat, i, item)
    a.back(item, cat)
    a.tap(item, "Add to cart", item)
    a.tap(main, "Recommended for you", rec)
    a.tap(rec, "Picked item A", item)
    a.tap(rec, "Picked item B", item)
    a.tap(rec, "See more picks", carousel)
    a.back(rec, main)
    a.tap(carousel, "Close", rec)
    a.back(carousel, rec)
    a.tap(main, "Sponsored: Trail sneakers", sponsor)
    a.back(sponsor, main)
    a.ad("sponsored_card", sponsor, "embedded")
    a.ad("picks_carousel", carousel, "popup")
    return a


def fitness_image():
    a = App("fitness_image", "fit.pulseday")
    a.sdk_activity(ADMOB_ACTIVITY, ADMOB)
    a.ad_permission(AD_ID_PERM)
    a.ad_metadata(ADMOB_APP_ID, ADMOB)
    a.resources[a.rid("adView")] = "0x7f10000a"
    a.layout("DashboardActivity", node("LinearLayout", None, [
        slot("com.google.android.gms.ads.AdView", a.rid("adView"), "banner", "0x7f10000a"),
    ]))
    a.klass("DashboardActivity", "android.app.Activity", [("refresh", ["com.google.android.gms.ads.AdLoader.loadAds"], None)])
    a.expect_trigger("DashboardActivity", "refresh", 2, ADMOB)
    main = a.screen("main", "DashboardActivity", [
        label("Today"), button("Start workout"), button("History"), button("Profile"),
        image(visual=("UI_ELEMENT", "Flame icon showing a 5 day streak")),
        image(visual=("UI_ELEMENT", "Water glass progress ring")),
        image(visual=("AD", "Promotional image of a protein shake with a shop button")),
    ])
    workout = a.screen("workout", "WorkoutActivity", [row("Push ups"), row("Squats"), row("Plank")])
    history = a.screen("history", "DashboardActivity", [row("Monday"), row("Tuesday")])
    profile = a.screen("profile", "ProfileActivity", [row("Weight"), row("Goals")])
    shop = a.screen("shake_shop", "org.chromium.chrome.browser.ChromeTabbedActivity", [label("Protein shakes")], external=True)
    a.tap(main, "Start workout", workout)
    a.tap(main, "History", history)
    a.tap(main, "Profile", profile)
    for s in (workout, history, profile):
        a.back(s, main)
    for ex in ("Push ups", "Squats", "Plank"):
        a.tap(workout, ex, workout)
    a.tap(main, 6, shop)
    a.back(shop, main)
    a.ad("shake_banner", shop, "embedded")
    return a


def horoscope_potential():
    a = App("horoscope_potential", "star.dailysign")
    a.sdk_activity("com.vungle.warren.AdActivity", VUNGLE)
    a.resources[a.rid("vungleSlot")] = "0x7f110002"
    a.layout("SignActivity", node("ScrollView", None, [node("LinearLayout", None, [
        node("TextView", a.rid("reading")),
        slot("com.vungle.warren.VungleBanner", a.rid("vungleSlot"), "banner", "0x7f110002"),
    ])]))
    main = a.screen("main", "SignActivity", [
        label("Your sign")] + [row(z) for z in SIGNS] + [row("Settings"),
        image(visual=("POTENTIAL_AD", "Crystal ball with a small storefront badge")),
    ])
    reading = a.screen("reading", "SignActivity", [label("Reading text"), button("Tomorrow"), button("Share")])
    store = a.screen("crystal_store", "StoreActivity", [label("Special readings"), button("Love reading 1.99"), button("Learn more")])
    ad = a.screen("learn_ad", "com.vungle.warren.AdActivity", [widget("android.webkit.WebView"), widget("android.widget.ImageButton", desc="Close")])
    for s in SIGNS:
        a.tap(main, s, reading)
    settings_tree(a, main, "SignActivity", ["Daily reminder", "Birth chart", "Language"])
    a.tap(reading, "Tomorrow", reading)
    a.back(reading, main)
    a.tap(main, a.index_of(main, "Settings") + 1, store)
    a.back(store, main)
    a.tap(store, "Learn more", ad)
    a.tap(ad, "Close", store)
    a.back(ad, store)
    a.ad("reading_offer", ad, "popup")
    return a


def music_dwell():
    a = App("music_dwell", "audio.tunebox")
    a.sdk_activity("com.applovin.adview.AppLovinFullscreenActivity", APPLOVIN)
    a.resources[a.rid("maxBanner")] = "0x7f120005"
    a.layout("PlayerActivity", node("LinearLayout", None, [
        slot("com.applovin.mediation.ads.MaxAdView", a.rid("maxBanner"), "banner", "0x7f120005"),
    ]))
    a.klass("PlayerActivity", "android.app.Activity", [
        ("onTrackEnd", ["com.applovin.mediation.ads.MaxInterstitialAd.showAd"], ["com.applovin.mediation.MaxAdListener"]),
    ])
    a.expect_trigger("PlayerActivity", "onTrackEnd", 3, APPLOVIN)
    main = a.screen("main", "LibraryActivity", [label("Library"), row("Albums"), row("Artists"), row("Playlists")])
    albums = a.screen("albums", "LibraryActivity", [row("Album one"), row("Album two")])
    artists = a.screen("artists", "LibraryActivity", [row("Artist one"), row("Artist two")])
    playlists = a.screen("playlists", "LibraryActivity", [row("Road trip"), row("Focus")])
    player = a.screen("player", "PlayerActivity", [button("Pause"), button("Next track"), button("Lyrics")])
    lyrics = a.screen("lyrics", "PlayerActivity", [label("Lyrics text"), button("Close")])
    a.tap(main, "Albums", albums)
    a.tap(main, "Artists", artists)
    a.tap(main, "Playlists", playlists)
    for s, items in ((albums, ("Album one", "Album two")), (artists, ("Artist one", "Artist two")), (playlists, ("Road trip", "Focus"))):
        a.back(s, main)
        for i in items:
            a.tap(s, i, player)
    a.tap(player, "Pause", player)
    a.tap(player, "Next track", player)
    a.tap(player, "Lyrics", lyrics)
    a.tap(lyrics, "Close", player)
    a.back(player, main)
    a.back(lyrics, player)
    a.ad("track_interstitial", player, "popup", dwell=10.0)
    return a


def calculator_more():
    a = App("calculator_more", "tools.sumly")
    a.sdk_activity(ADMOB_ACTIVITY, ADMOB)
    a.ad_metadata(ADMOB_APP_ID, ADMOB)
    a.klass("CalcActivity", "android.app.Activity", [("onCreate", ["com.google.android.gms.ads.MobileAds.initialize"], None)])
    a.expect_trigger("CalcActivity", "onCreate", 1, ADMOB)
    keys = ["C", "%", "÷", "7", "8", "9", "×", "4", "5", "6", "−", "1", "2", "3", "+", "0", ".", "="]
    main = a.screen("main", "CalcActivity", [label("0")] + [button(k) for k in keys] + [widget("android.widget.ImageButton", desc="More options")])
    menu = a.screen("menu", "CalcActivity", [row("History"), row("Theme"), row("Settings"), row("About"), row("More apps")])
    settings_tree(a, menu, "SettingsActivity", ["Display", "Precision", "Sounds", "Angle units", "Backup"])
    history = a.screen("history", "HistoryActivity", [row("7 + 8 = 15"), button("Clear")])
    promo = a.screen("promo", "PromoActivity", [row("Unit Converter"), row("Currency Pro"), button("Install now")])
    store = a.screen("store", "com.android.vending.AssetBrowserActivity", [label("Unit Converter"), button("Install")], external=True)
    for k in keys:
        a.tap(main, k, main)
    a.tap(main, "More options", menu)
    a.back(menu, main)
    a.tap(menu, "History", history)
    a.tap(menu, "Theme", main)
    a.tap(menu, "More apps", promo)
    a.tap(menu, "About", main)
    a.back(history, main)
    a.tap(history, "Clear", history)
    a.back(promo, menu)
    a.tap(promo, "Unit Converter", promo)
    a.tap(promo, "Install now", store)
    a.back(store, promo)
    a.ad("converter_install", store, "custom")
    return a


def news_embedded():
    a = App("news_embedded", "press.morningwire")
    a.sdk_activity("com.chartboost.sdk.CBImpressionActivity", CHARTBOOST)
    a.resources[a.rid("cbBanner")] = "0x7f130009"
    a.layout("ArticleActivity", node("NestedScrollView", None, [node("LinearLayout", None, [
        node("TextView", a.rid("body")),
        slot("com.chartboost.sdk.Banner", a.rid("cbBanner"), "banner", "0x7f130009"),
    ])]))
    a.klass("ArticleActivity", "android.app.Activity", [("onOpen", ["com.chartboost.sdk.Chartboost.showInterstitial"], None)])
    a.expect_trigger("ArticleActivity", "onOpen", 3, CHARTBOOST)
    stories = ["Local council vote", "Weather warning", "Sports", "Markets close higher", "New bridge opens",
               "School term dates", "Film festival lineup", "Transit strike ends", "Science prize", "Election debate"]
    main = a.screen("main", "FeedActivity", [label("Top stories")] + [row(s) for s in stories] + [row("Settings"), row("Trending"), row("Sponsored content")])
    settings_tree(a, main, "SettingsActivity", ["Notifications", "Text size", "Regions", "Offline reading"])
    article = a.screen("article", "ArticleActivity", [label("Article body"), button("Comments"), button("Bookmark")])
    trending = a.screen("trending", "FeedActivity", [row("Story one"), row("Story two"), row("Story three"), row("Story four")])
    sponsor = a.screen("sponsor", "com.chartboost.sdk.CBImpressionActivity", [widget("android.webkit.WebView"), widget("android.widget.ImageButton", desc="Close")])
    for s in stories:
        a.tap(main, s, article)
    a.tap(main, "Trending", trending)
    a.back(article, main)
    a.back(trending, main)
    a.tap(article, "Bookmark", article)
    a.tap(trending, "Story one", article)
    a.tap(trending, "Story two", article)
    a.tap(trending, "Story three", article)
    a.tap(trending, "Story four", article)
    a.tap(main, "Sponsored content", sponsor)
    a.tap(sponsor, "Close", main)
    a.back(sponsor, main)
    a.ad("sponsored_story", sponsor, "embedded")
    return a


def wallpaper_canvas():
    a = App("wallpaper_canvas", "art.wallhaven")
    a.sdk_activity("com.ironsource.sdk.controller.ControllerActivity", IRONSOURCE)
    a.ad_metadata({"name": "com.ironsource.appKey", "value": "ab12"}, IRONSOURCE)
    a.klass("GalleryActivity", "android.app.Activity", [("onCoins", ["com.ironsource.mediationsdk.IronSource.showRewardedVideo"], None)])
    a.expect_trigger("GalleryActivity", "onCoins", 3, IRONSOURCE)
    labels = [
        ("UI_ELEMENT", "Mountain wallpaper thumbnail"),
        ("UI_ELEMENT", "Ocean wallpaper thumbnail"),
        ("UI_ELEMENT", "City lights thumbnail"),
        ("UI_ELEMENT", "Forest wallpaper thumbnail"),
        ("UI_ELEMENT", "Search magnifier icon"),
        ("POTENTIAL_AD", "Golden crown badge reading premium wallpapers"),
        ("AD", "Coin stack with a reward ribbon"),
    ]
    regions = []
    for i, (tag, desc) in enumerate(labels):
        r, c = divmod(i, 2)
        regions.append({"bounds": [40 + c * 520, 300 + r * 420, 520 + c * 520, 680 + r * 420], "kind": "button", "visual": {"tag": tag, "description": desc}})
    home = a.screen("home", "GalleryActivity", regions=regions)
    view = a.screen("view", "PreviewActivity", [button("Set as wallpaper"), button("Download")])
    premium = a.screen("premium", "PreviewActivity", [label("Premium pack"), button("Subscribe")])
    coins = a.screen("coins_video", "com.ironsource.sdk.controller.ControllerActivity", [widget("android.widget.VideoView"), widget("android.widget.ImageButton", desc="Close")])
    for i in range(4):
        a.tap(home, i, view)
    a.tap(view, "Set as wallpaper", home)
    a.tap(view, "Download", view)
    a.back(view, home)
    a.tap(home, 5, premium)
    a.back(premium, home)
    a.tap(home, 6, coins)
    a.tap(coins, "Close", home)
    a.back(coins, home)
    a.ad("coin_reward", coins, "popup")
    return a


def game_remove_ads():
    a = App("game_remove_ads", "arcade.blockdrop")
    a.sdk_activity("com.unity3d.ads.adunit.AdUnitActivity", UNITY)
    a.ad_permission(AD_ID_PERM)
    a.resources[a.rid("unityBanner")] = "0x7f140001"
    a.layout("MenuActivity", node("FrameLayout", None, [
        # Newer Unity banner package: not covered by the signature list.
        node("com.unity3d.services.banners.BannerView", a.rid("unityBanner")),
    ]))
    a.klass("MenuActivity", "android.app.Activity", [("startBonus", ["com.unity3d.ads.UnityAds.show"], ["com.unity3d.ads.IUnityAdsShowListener"])])
    a.expect_trigger("MenuActivity", "startBonus", 3, UNITY)
    main = a.screen("main", "MenuActivity", [label("Block Drop"), button("Remove Ads"), button("Options"), button("High scores"), button("Bonus level")])
    shop = a.screen("iap", "ShopActivity", [label("Remove all ads for 2.99"), button("Purchase"), button("Restore")])
    opts = a.screen("options", "MenuActivity", [row("Sound"), row("Controls")])
    scores = a.screen("scores", "MenuActivity", [row("1. 5200"), row("2. 4100")])
    bonus = a.screen("bonus_ad", "com.unity3d.ads.adunit.AdUnitActivity", [widget("android.widget.VideoView"), widget("android.widget.ImageButton", desc="Close")])
    a.tap(main, "Remove Ads", shop)
    a.tap(shop, "Purchase", shop)
    a.back(shop, main)
    a.tap(main, "Options", opts)
    a.back(opts, main)
    a.tap(main, "High scores", scores)
    a.back(scores, main)
    a.tap(main, "Bonus level", bonus)
    a.tap(bonus, "Close", main)
    a.back(bonus, main)
    a.ad("bonus_video", bonus, "popup")
    return a


def vpn_network():
    a = App("vpn_network", "net.tunnelfox")
    a.sdk_activity("com.ironsource.sdk.controller.ControllerActivity", IRONSOURCE)
    a.klass("ConnectActivity", "android.app.Activity", [("onConnected", ["com.ironsource.mediationsdk.IronSource.init"], None)])
    a.expect_trigger("ConnectActivity", "onConnected", 1, IRONSOURCE)
    main = a.screen("main", "ConnectActivity", [label("Not connected"), button("Servers"), button("Split tunnel"), button("Connect")])
    servers = a.screen("servers", "ServerActivity", [row("Frankfurt"), row("Tokyo"), row("Toronto")])
    split = a.screen("split", "ServerActivity", [row("Browser"), row("Mail")])
    connected = a.screen("connected", "ConnectActivity", [label("Connected"), button("Disconnect")])
    inter = a.screen("connect_ad", "com.ironsource.sdk.controller.ControllerActivity", [widget("android.webkit.WebView"), widget("android.widget.ImageButton", desc="Close")])
    a.tap(main, "Servers", servers)
    a.tap(main, "Split tunnel", split)
    act = a.tap(main, "Connect", inter)
    a.emit(main, act, 4.1, "https://outcome-ssp.supersonicads.com/mediation?adunit=interstitial")
    a.tap(inter, "Close", connected)
    a.back(inter, connected)
    a.tap(connected, "Disconnect", main)
    for s in ("Frankfurt", "Tokyo", "Toronto"):
        a.tap(servers, s, main)
    a.back(servers, main)
    a.back(split, main)
    a.ad("connect_interstitial", inter, "popup")
    return a


def translator_offline():
    a = App("translator_offline", "lang.parrot")
    a.sdk_activity(ADMOB_ACTIVITY, ADMOB)
    a.ad_permission(AD_ID_PERM)
    a.ad_metadata(ADMOB_APP_ID, ADMOB)
    a.resources[a.rid("interstitialSlot")] = "0x7f150004"
    a.layout("PacksActivity", node("LinearLayout", None, [
        slot("com.google.android.gms.ads.AdView", a.rid("interstitialSlot"), "interstitial", "0x7f150004"),
    ]))
    langs = ["French", "German", "Japanese", "Spanish", "Italian", "Korean", "Polish", "Turkish"]
    main = a.screen("main", "TranslateActivity", [widget("android.widget.EditText", text="Enter text"), button("Translate"), button("Swap"), button("Settings"), button("Offline packs")])
    packs = a.screen("packs", "PacksActivity", [row(l) for l in langs])
    settings_tree(a, main, "TranslateActivity", ["Voice", "Phrasebook", "Camera", "History"])
    pack = a.screen("pack", "PacksActivity", [label("Pack size 40 MB"), button("Download")])
    gate = a.screen("gate", "PacksActivity", [label("Free download"), button("Watch ad to download free")])
    video = a.screen("video", "com.google.android.gms.ads.AdActivity", [widget("android.widget.VideoView"), widget("android.widget.ImageButton", desc="Close")])
    a.tap(main, "Translate", main)
    a.tap(main, "Swap", main)
    a.tap(main, "Offline packs", packs)
    a.back(packs, main)
    for l in langs:
        a.tap(packs, l, pack)
    a.back(pack, packs)
    a.tap(pack, "Download", gate)
    a.back(gate, pack)
    a.tap(gate, "Watch ad to download free", video)
    a.tap(video, "Close", packs)
    a.back(video, packs)
    a.ad("pack_video", video, "popup")
    return a


def budget_offers():
    a = App("budget_offers", "money.penny")
    a.sdk_activity(ADMOB_ACTIVITY, ADMOB)
    a.ad_metadata(ADMOB_APP_ID, ADMOB)
    a.klass("OffersFragment", "androidx.fragment.app.Fragment", [("onShow", ["com.google.android.gms.ads.interstitial.InterstitialAd.show"], None)])
    a.klass("WalletActivity", "android.app.Activity", [("onCreate", ["com.google.android.gms.ads.MobileAds.initialize"], None)])
    a.expect_trigger("<unattributed>", "onShow", 3, ADMOB)
    a.expect_trigger("WalletActivity", "onCreate", 1, ADMOB)
    main = a.screen("main", "WalletActivity", [label("Balance"), button("Add expense"), button("Reports"), button("Categories"), button("Card offers")])
    expense = a.screen("expense", "WalletActivity", [widget("android.widget.EditText", text="Amount"), button("Save")])
    reports = a.screen("reports", "ReportActivity", [row("This month"), row("Last month")])
    cats = a.screen("cats", "WalletActivity", [row("Food"), row("Rent")])
    offers = a.screen("offers", "OffersActivity", [row("Cashback card"), row("Travel card")])
    inter = a.screen("offer_ad", "com.google.android.gms.ads.AdActivity", [widget("android.webkit.WebView"), widget("android.widget.ImageButton", desc="Close")])
    a.tap(main, "Add expense", expense)
    a.tap(expense, "Save", main)
    a.tap(main, "Reports", reports)
    a.tap(main, "Categories", cats)
    a.tap(main, "Card offers", offers)
    for s in (expense, reports, cats, offers):
        a.back(s, main)
    a.tap(offers, "Cashback card", inter)
    a.tap(offers, "Travel card", inter)
    a.tap(inter, "Close", offers)
    a.back(inter, offers)
    a.ad("card_interstitial", inter, "popup")
    return a


SIGNS = ["Aries", "Taurus", "Gemini", "Cancer", "Leo", "Virgo", "Libra", "Scorpio", "Sagittarius",
         "Capricorn", "Aquarius", "Pisces"]
CATEGORIES = ["Shoes", "Jackets", "Bags", "Watches", "Sportswear", "Kids", "Home"]

APPS = [
    dict_loop, notes_plain, canvas_frog, quiz_chain, obfuscated_reader, weather_gift, flashlight_crash,
    radio_stream, recipe_native, puzzle_rewarded, shopping_sponsored, fitness_image, horoscope_potential,
    music_dwell, calculator_more, news_embedded, wallpaper_canvas, game_remove_ads, vpn_network,
    translator_offline,
]

CANVAS = {"canvas_frog", "wallpaper_canvas"}


def write_json(path, doc):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, ensure_ascii=False) + "\n")


def main():
    apps = [f() for f in APPS]
    assert len(apps) == 20, len(apps)
    # budget_offers is kept as an extra bundle outside the corpus.
    extra = budget_offers()
    for a in apps + [extra]:
        write_json(ROOT / "bundles" / f"{a.app_id}.json", a.bundle())
        write_json(ROOT / "expected" / f"{a.app_id}.profile.json", a.expected())

    def manifest(name, ids):
        lines = [f'name = "{name}"', ""]
        for i in ids:
            lines += ["[[apps]]", f'bundle = "bundles/{i}.json"', ""]
        return "\n".join(lines)

    (ROOT / "corpus.toml").write_text(manifest("fixtures", [a.app_id for a in apps]))
    (ROOT / "hierarchy.toml").write_text(manifest("hierarchy", [a.app_id for a in apps if a.app_id not in CANVAS]))

    transcript = [
        {"kind": "decision", "reply": json.dumps({
            "reasoning": "Element 0 opens the side drawer, which usually holds links to other apps and offers.",
            "ad_score": 0.05, "choice": 0})},
        {"kind": "decision", "reply": json.dumps({
            "reasoning": "Element 1, 'Other App', points to external app suggestions that commonly show promotions.",
            "ad_score": 0.05, "choice": 1})},
        {"kind": "summary", "reply": "Interacting with navigation options that lead to external app suggestions often triggers advertisement displays."},
    ]
    path = ROOT / "transcripts" / "dict_loop.jsonl"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("".join(json.dumps(r) + "\n" for r in transcript))


if __name__ == "__main__":
    main()
