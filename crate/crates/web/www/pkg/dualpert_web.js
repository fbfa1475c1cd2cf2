/* @ts-self-types="./dualpert_web.d.ts" */

/**
 * Summary of one attack on the selected image.
 */
export class AttackReport {
    static __wrap(ptr) {
        const obj = Object.create(AttackReport.prototype);
        obj.__wbg_ptr = ptr;
        AttackReportFinalization.register(obj, obj.__wbg_ptr, obj);
        return obj;
    }
    __destroy_into_raw() {
        const ptr = this.__wbg_ptr;
        this.__wbg_ptr = 0;
        AttackReportFinalization.unregister(this);
        return ptr;
    }
    free() {
        const ptr = this.__destroy_into_raw();
        wasm.__wbg_attackreport_free(ptr, 0);
    }
    /**
     * @returns {number}
     */
    get adversarial_fs() {
        const ret = wasm.__wbg_get_attackreport_adversarial_fs(this.__wbg_ptr);
        return ret;
    }
    /**
     * @returns {number}
     */
    get adversarial_prediction() {
        const ret = wasm.__wbg_get_attackreport_adversarial_prediction(this.__wbg_ptr);
        return ret >>> 0;
    }
    /**
     * @returns {number}
     */
    get background_norm() {
        const ret = wasm.__wbg_get_attackreport_background_norm(this.__wbg_ptr);
        return ret;
    }
    /**
     * @returns {number}
     */
    get clean_fs() {
        const ret = wasm.__wbg_get_attackreport_clean_fs(this.__wbg_ptr);
        return ret;
    }
    /**
     * @returns {number}
     */
    get clean_prediction() {
        const ret = wasm.__wbg_get_attackreport_clean_prediction(this.__wbg_ptr);
        return ret >>> 0;
    }
    /**
     * @returns {number}
     */
    get foreground_norm() {
        const ret = wasm.__wbg_get_attackreport_foreground_norm(this.__wbg_ptr);
        return ret;
    }
    /**
     * @returns {number}
     */
    get label() {
        const ret = wasm.__wbg_get_attackreport_label(this.__wbg_ptr);
        return ret >>> 0;
    }
    /**
     * @param {number} arg0
     */
    set adversarial_fs(arg0) {
        wasm.__wbg_set_attackreport_adversarial_fs(this.__wbg_ptr, arg0);
    }
    /**
     * @param {number} arg0
     */
    set adversarial_prediction(arg0) {
        wasm.__wbg_set_attackreport_adversarial_prediction(this.__wbg_ptr, arg0);
    }
    /**
     * @param {number} arg0
     */
    set background_norm(arg0) {
        wasm.__wbg_set_attackreport_background_norm(this.__wbg_ptr, arg0);
    }
    /**
     * @param {number} arg0
     */
    set clean_fs(arg0) {
        wasm.__wbg_set_attackreport_clean_fs(this.__wbg_ptr, arg0);
    }
    /**
     * @param {number} arg0
     */
    set clean_prediction(arg0) {
        wasm.__wbg_set_attackreport_clean_prediction(this.__wbg_ptr, arg0);
    }
    /**
     * @param {number} arg0
     */
    set foreground_norm(arg0) {
        wasm.__wbg_set_attackreport_foreground_norm(this.__wbg_ptr, arg0);
    }
    /**
     * @param {number} arg0
     */
    set label(arg0) {
        wasm.__wbg_set_attackreport_label(this.__wbg_ptr, arg0);
    }
}
if (Symbol.dispose) AttackReport.prototype[Symbol.dispose] = AttackReport.prototype.free;

export class Lab {
    __destroy_into_raw() {
        const ptr = this.__wbg_ptr;
        this.__wbg_ptr = 0;
        LabFinalization.unregister(this);
        return ptr;
    }
    free() {
        const ptr = this.__destroy_into_raw();
        wasm.__wbg_lab_free(ptr, 0);
    }
    /**
     * RGBA of the last adversarial image (the clean image if none).
     * @returns {Uint8Array}
     */
    adversarial_rgba() {
        const ret = wasm.lab_adversarial_rgba(this.__wbg_ptr);
        var v1 = getArrayU8FromWasm0(ret[0], ret[1]).slice();
        wasm.__wbindgen_free(ret[0], ret[1] * 1, 1);
        return v1;
    }
    /**
     * Dual-perturbation attack on the selected image using its object mask
     * (or the fixation mask when `use_fixation`).
     * @param {number} eps_fg
     * @param {number} eps_bg
     * @param {number} lambda
     * @param {number} steps
     * @param {boolean} linf
     * @param {boolean} use_fixation
     * @param {number} seed
     * @returns {AttackReport}
     */
    attack(eps_fg, eps_bg, lambda, steps, linf, use_fixation, seed) {
        const ret = wasm.lab_attack(this.__wbg_ptr, eps_fg, eps_bg, lambda, steps, linf, use_fixation, seed);
        if (ret[2]) {
            throw takeFromExternrefTable0(ret[1]);
        }
        return AttackReport.__wrap(ret[0]);
    }
    /**
     * @param {number} k
     * @returns {string}
     */
    class_name(k) {
        let deferred1_0;
        let deferred1_1;
        try {
            const ret = wasm.lab_class_name(this.__wbg_ptr, k);
            deferred1_0 = ret[0];
            deferred1_1 = ret[1];
            return getStringFromWasm0(ret[0], ret[1]);
        } finally {
            wasm.__wbindgen_free(deferred1_0, deferred1_1, 1);
        }
    }
    /**
     * @returns {number}
     */
    epochs_done() {
        const ret = wasm.lab_epochs_done(this.__wbg_ptr);
        return ret;
    }
    /**
     * @returns {Uint8Array}
     */
    image_rgba() {
        const ret = wasm.lab_image_rgba(this.__wbg_ptr);
        var v1 = getArrayU8FromWasm0(ret[0], ret[1]).slice();
        wasm.__wbindgen_free(ret[0], ret[1] * 1, 1);
        return v1;
    }
    /**
     * @returns {number}
     */
    label() {
        const ret = wasm.lab_label(this.__wbg_ptr);
        return ret >>> 0;
    }
    /**
     * IoU between the fixation mask and the object mask of the selected image.
     * @returns {number}
     */
    mask_iou() {
        const ret = wasm.lab_mask_iou(this.__wbg_ptr);
        if (ret[2]) {
            throw takeFromExternrefTable0(ret[1]);
        }
        return ret[0];
    }
    /**
     * @returns {Uint8Array}
     */
    masks_rgba() {
        const ret = wasm.lab_masks_rgba(this.__wbg_ptr);
        if (ret[3]) {
            throw takeFromExternrefTable0(ret[2]);
        }
        var v1 = getArrayU8FromWasm0(ret[0], ret[1]).slice();
        wasm.__wbindgen_free(ret[0], ret[1] * 1, 1);
        return v1;
    }
    /**
     * Generate `samples` synthetic images (three quarters for training)
     * and an untrained classifier.
     * @param {number} seed
     * @param {number} samples
     */
    constructor(seed, samples) {
        const ret = wasm.lab_new(seed, samples);
        if (ret[2]) {
            throw takeFromExternrefTable0(ret[1]);
        }
        this.__wbg_ptr = ret[0];
        LabFinalization.register(this, this.__wbg_ptr, this);
        return this;
    }
    /**
     * @returns {Uint8Array}
     */
    perturbation_rgba() {
        const ret = wasm.lab_perturbation_rgba(this.__wbg_ptr);
        if (ret[3]) {
            throw takeFromExternrefTable0(ret[2]);
        }
        var v1 = getArrayU8FromWasm0(ret[0], ret[1]).slice();
        wasm.__wbindgen_free(ret[0], ret[1] * 1, 1);
        return v1;
    }
    /**
     * @returns {number}
     */
    predict() {
        const ret = wasm.lab_predict(this.__wbg_ptr);
        if (ret[2]) {
            throw takeFromExternrefTable0(ret[1]);
        }
        return ret[0] >>> 0;
    }
    /**
     * @returns {Uint8Array}
     */
    salience_rgba() {
        const ret = wasm.lab_salience_rgba(this.__wbg_ptr);
        if (ret[3]) {
            throw takeFromExternrefTable0(ret[2]);
        }
        var v1 = getArrayU8FromWasm0(ret[0], ret[1]).slice();
        wasm.__wbindgen_free(ret[0], ret[1] * 1, 1);
        return v1;
    }
    /**
     * Select a test image; clears the last adversarial example.
     * @param {number} index
     */
    select(index) {
        wasm.lab_select(this.__wbg_ptr, index);
    }
    /**
     * @returns {number}
     */
    selected() {
        const ret = wasm.lab_selected(this.__wbg_ptr);
        return ret >>> 0;
    }
    /**
     * @returns {number}
     */
    size() {
        const ret = wasm.lab_size(this.__wbg_ptr);
        return ret >>> 0;
    }
    /**
     * Accuracy on the held-out images.
     * @returns {number}
     */
    test_accuracy() {
        const ret = wasm.lab_test_accuracy(this.__wbg_ptr);
        if (ret[2]) {
            throw takeFromExternrefTable0(ret[1]);
        }
        return ret[0];
    }
    /**
     * @returns {number}
     */
    test_len() {
        const ret = wasm.lab_test_len(this.__wbg_ptr);
        return ret >>> 0;
    }
    /**
     * Run `count` Adam minibatches; returns the mean loss.
     * @param {number} count
     * @returns {number}
     */
    train_batches(count) {
        const ret = wasm.lab_train_batches(this.__wbg_ptr, count);
        if (ret[2]) {
            throw takeFromExternrefTable0(ret[1]);
        }
        return ret[0];
    }
}
if (Symbol.dispose) Lab.prototype[Symbol.dispose] = Lab.prototype.free;
function __wbg_get_imports() {
    const import0 = {
        __proto__: null,
        __wbg_Error_30c8987f7c2ed4e2: function(arg0, arg1) {
            const ret = Error(getStringFromWasm0(arg0, arg1));
            return ret;
        },
        __wbg___wbindgen_throw_41e9ee4f547fc59a: function(arg0, arg1) {
            throw new Error(getStringFromWasm0(arg0, arg1));
        },
        __wbindgen_init_externref_table: function() {
            const table = wasm.__wbindgen_externrefs;
            const offset = table.grow(4);
            table.set(0, undefined);
            table.set(offset + 0, undefined);
            table.set(offset + 1, null);
            table.set(offset + 2, true);
            table.set(offset + 3, false);
        },
    };
    return {
        __proto__: null,
        "./dualpert_web_bg.js": import0,
    };
}

const AttackReportFinalization = (typeof FinalizationRegistry === 'undefined')
    ? { register: () => {}, unregister: () => {} }
    : new FinalizationRegistry(ptr => wasm.__wbg_attackreport_free(ptr, 1));
const LabFinalization = (typeof FinalizationRegistry === 'undefined')
    ? { register: () => {}, unregister: () => {} }
    : new FinalizationRegistry(ptr => wasm.__wbg_lab_free(ptr, 1));

function getArrayU8FromWasm0(ptr, len) {
    ptr = ptr >>> 0;
    return getUint8ArrayMemory0().subarray(ptr / 1, ptr / 1 + len);
}

function getStringFromWasm0(ptr, len) {
    return decodeText(ptr >>> 0, len);
}

let cachedUint8ArrayMemory0 = null;
function getUint8ArrayMemory0() {
    if (cachedUint8ArrayMemory0 === null || cachedUint8ArrayMemory0.byteLength === 0) {
        cachedUint8ArrayMemory0 = new Uint8Array(wasm.memory.buffer);
    }
    return cachedUint8ArrayMemory0;
}

function takeFromExternrefTable0(idx) {
    const value = wasm.__wbindgen_externrefs.get(idx);
    wasm.__externref_table_dealloc(idx);
    return value;
}

let cachedTextDecoder = new TextDecoder('utf-8', { ignoreBOM: true, fatal: true });
cachedTextDecoder.decode();
const MAX_SAFARI_DECODE_BYTES = 2146435072;
let numBytesDecoded = 0;
function decodeText(ptr, len) {
    numBytesDecoded += len;
    if (numBytesDecoded >= MAX_SAFARI_DECODE_BYTES) {
        cachedTextDecoder = new TextDecoder('utf-8', { ignoreBOM: true, fatal: true });
        cachedTextDecoder.decode();
        numBytesDecoded = len;
    }
    return cachedTextDecoder.decode(getUint8ArrayMemory0().subarray(ptr, ptr + len));
}

let wasmModule, wasmInstance, wasm;
function __wbg_finalize_init(instance, module) {
    wasmInstance = instance;
    wasm = instance.exports;
    wasmModule = module;
    cachedUint8ArrayMemory0 = null;
    wasm.__wbindgen_start();
    return wasm;
}

async function __wbg_load(module, imports) {
    if (typeof Response === 'function' && module instanceof Response) {
        if (!module.ok) {
            throw new Error(`failed to fetch Wasm: ${module.status} ${module.statusText} fetching '${module.url}'`);
        }

        if (typeof WebAssembly.instantiateStreaming === 'function') {
            try {
                return await WebAssembly.instantiateStreaming(module, imports);
            } catch (e) {
                const validResponse = expectedResponseType(module.type);

                if (validResponse && module.headers.get('Content-Type') !== 'application/wasm') {
                    console.warn("`WebAssembly.instantiateStreaming` failed because your server does not serve Wasm with `application/wasm` MIME type. Falling back to `WebAssembly.instantiate` which is slower. Original error:\n", e);

                } else { throw e; }
            }
        }

        const bytes = await module.arrayBuffer();
        return await WebAssembly.instantiate(bytes, imports);
    } else {
        const instance = await WebAssembly.instantiate(module, imports);

        if (instance instanceof WebAssembly.Instance) {
            return { instance, module };
        } else {
            return instance;
        }
    }

    function expectedResponseType(type) {
        switch (type) {
            case 'basic': case 'cors': case 'default': return true;
        }
        return false;
    }
}

function initSync(module) {
    if (wasm !== undefined) return wasm;


    if (module !== undefined) {
        if (Object.getPrototypeOf(module) === Object.prototype) {
            ({module} = module)
        } else {
            console.warn('using deprecated parameters for `initSync()`; pass a single object instead')
        }
    }

    const imports = __wbg_get_imports();
    if (!(module instanceof WebAssembly.Module)) {
        module = new WebAssembly.Module(module);
    }
    const instance = new WebAssembly.Instance(module, imports);
    return __wbg_finalize_init(instance, module);
}

async function __wbg_init(module_or_path) {
    if (wasm !== undefined) return wasm;


    if (module_or_path !== undefined) {
        if (Object.getPrototypeOf(module_or_path) === Object.prototype) {
            ({module_or_path} = module_or_path)
        } else {
            console.warn('using deprecated parameters for the initialization function; pass a single object instead')
        }
    }

    if (module_or_path === undefined) {
        module_or_path = new URL('dualpert_web_bg.wasm', import.meta.url);
    }
    const imports = __wbg_get_imports();

    if (typeof module_or_path === 'string' || (typeof Request === 'function' && module_or_path instanceof Request) || (typeof URL === 'function' && module_or_path instanceof URL)) {
        module_or_path = fetch(module_or_path);
    }

    const { instance, module } = await __wbg_load(await module_or_path, imports);

    return __wbg_finalize_init(instance, module);
}

export { initSync, __wbg_init as default };
